"""CSV ingestion, JSON fit reports and curve emission."""

import logging
import math
from pathlib import Path
from typing import List, Mapping, Sequence, Tuple, Union

import numpy as np
import orjson
import polars as pl
from pydantic import ValidationError

from src.data import build_series
from src.errors import DataError, InvalidGrid, ParseError
from src.models import Report, TimeSeries
from src.registry import registry

logger = logging.getLogger(__name__)

HEADER = "t,y"

# Plain decimal numbers only: no locale marks, no nan/inf spellings
_NUMBER = r"^[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?$"

COLUMNS = {"t": pl.String, "y": pl.String}

CurveRows = List[Tuple[float, float]]

MIN_CURVE_STEPS = 2


def _data_lines(text: str) -> Tuple[List[int], List[str]]:
    """Drop blank, '#' and leading header lines, keeping 1-based source line numbers."""
    numbers: List[int] = []
    lines: List[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not lines and line.replace(" ", "").lower() == HEADER:
            continue
        numbers.append(lineno)
        lines.append(line)
    return numbers, lines


def parse_csv(text: str) -> TimeSeries:
    """Parse `t,y` rows into a series.

    Blank lines and lines starting with '#' are skipped; a leading `t,y` header is optional.

    Raises:
        ParseError: With the 1-based line number of the first bad row
    """
    numbers, lines = _data_lines(text)
    if not lines:
        return build_series([], [])

    try:
        frame = pl.read_csv("\n".join(lines).encode(), has_header=False, schema=COLUMNS, quote_char=None)
    except pl.exceptions.PolarsError as e:
        bad = next((n for n, line in zip(numbers, lines) if line.count(",") != 1), None)
        raise ParseError(f"expected 2 comma-separated fields: {e}", line=bad) from e

    frame = frame.with_columns(pl.col("t").str.strip_chars(), pl.col("y").str.strip_chars())
    valid = (pl.col("t").str.contains(_NUMBER) & pl.col("y").str.contains(_NUMBER)).fill_null(False)
    bad_rows = frame.with_row_index("row").filter(~valid)
    if bad_rows.height:
        first = bad_rows.row(0, named=True)
        raise ParseError(f"not a number: {first['t']!r},{first['y']!r}", line=numbers[first["row"]])

    try:
        numeric = frame.cast(pl.Float64)
    except pl.exceptions.PolarsError as e:
        raise ParseError(f"not a number: {e}") from e
    return build_series(numeric["t"].to_numpy(), numeric["y"].to_numpy())


def read_csv(source: Union[str, Path]) -> TimeSeries:
    """Read a UTF-8 CSV file into a series."""
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise ParseError(f"{path} is not UTF-8: {e}") from e
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e

    series = parse_csv(text)
    logger.debug(f"Read {series.n} points from {path}")
    return series


def format_csv(times: Sequence[float], values: Sequence[float]) -> str:
    """Render `t,y` rows with shortest round-trip float text."""
    rows = [HEADER]
    rows.extend(f"{float(t)!r},{float(y)!r}" for t, y in zip(times, values))
    return "\n".join(rows) + "\n"


def write_report(report: Report) -> bytes:
    """Serialize a report as sorted-key, indented JSON; identical reports give identical bytes."""
    return orjson.dumps(
        report.model_dump(mode="json", by_alias=True),
        option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS,
    )


def read_report(document: Union[bytes, str]) -> Report:
    """Parse a report written by write_report."""
    try:
        data = orjson.loads(document)
    except orjson.JSONDecodeError as e:
        raise ParseError(f"invalid report JSON: {e}") from e
    try:
        return Report.model_validate(data)
    except ValidationError as e:
        raise DataError(f"invalid report: {e}") from e


def parse_grid(text: str, min_count: int = 2) -> Tuple[float, float, int]:
    """Parse `start:end:count` into a grid of count points from start to end inclusive."""
    parts = text.split(":")
    if len(parts) != 3:
        raise InvalidGrid(f"grid must look like start:end:count, got {text!r}")
    try:
        start, end, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as e:
        raise InvalidGrid(f"grid must look like start:end:count, got {text!r}") from e

    if count < min_count:
        raise InvalidGrid(f"a grid needs at least {min_count} points, got {count}")
    if not (math.isfinite(start) and math.isfinite(end)) or end <= start:
        raise InvalidGrid(f"grid end {end!r} must be finite and exceed start {start!r}")
    return start, end, count


def _check_grid(t_start: float, t_end: float, steps: int) -> None:
    if not (math.isfinite(t_start) and math.isfinite(t_end)):
        raise InvalidGrid("grid bounds must be finite")
    if steps < MIN_CURVE_STEPS:
        raise InvalidGrid(f"a curve needs at least {MIN_CURVE_STEPS} steps, got {steps}")
    if t_end <= t_start:
        raise InvalidGrid(f"grid end {t_end!r} must exceed start {t_start!r}")


def grid_times(t_start: float, t_end: float, count: int) -> np.ndarray:
    return np.linspace(t_start, t_end, count)


def emit_curve(model_id: str, params: Mapping[str, float], t_start: float, t_end: float,
               steps: int) -> CurveRows:
    """Evaluate a model on steps + 1 evenly spaced times, both endpoints included.

    Raises:
        InvalidGrid: steps < 2 or t_end <= t_start
        DomainError: At the first grid time outside the model domain
    """
    _check_grid(t_start, t_end, steps)
    times = grid_times(t_start, t_end, steps + 1)
    values = registry.evaluate_series(model_id, params, times)
    return [(float(t), float(y)) for t, y in zip(times, values)]


def format_curve_csv(rows: CurveRows) -> str:
    return format_csv([t for t, _ in rows], [y for _, y in rows])
