"""Exception hierarchy for the toolkit.

Errors derive from ``Exception``, not ``ValueError``, so they pass through
pydantic validators unwrapped.
"""

from typing import Optional


class ToolkitError(Exception):
    """Base class for every toolkit error."""


# Data problems (CLI exit code 2)

class DataError(ToolkitError):
    """Input data cannot be used."""


class LengthMismatch(DataError):
    pass


class NonFinite(DataError):
    pass


class NonMonotonicTime(DataError):
    pass


class EmptySeries(DataError):
    pass


class ParseError(DataError):
    """CSV or JSON text could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TooFewPoints(DataError):
    pass


class ZeroVariance(DataError):
    pass


class EmptyResiduals(DataError):
    pass


class NonPositiveDfe(DataError):
    pass


class MixedDatasets(DataError):
    pass


class IncompleteParams(DataError):
    pass


# Evaluation outside a model's domain (CLI exit code 4)

class DomainError(ToolkitError):
    """A formula was evaluated where it is undefined."""

    def __init__(self, message: str, index: Optional[int] = None, t: Optional[float] = None):
        self.index = index
        self.t = t
        if index is not None:
            message = f"{message} (index {index}, t={t!r})"
        super().__init__(message)


class PoleError(DomainError):
    pass


class InitDomainError(DomainError):
    pass


class DegenerateConfig(ToolkitError):
    pass


# Invocation problems (CLI exit code 1)

class UsageError(ToolkitError):
    pass


class UnknownModel(UsageError):
    pass


class InvalidGrid(UsageError):
    pass


class AllStartsFailed(ToolkitError):
    pass
