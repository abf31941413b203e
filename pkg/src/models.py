"""Pydantic models for the curve fitting toolkit."""

from __future__ import annotations

import math
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.config import config
from src.errors import (
    DegenerateConfig,
    EmptySeries,
    LengthMismatch,
    NonFinite,
    NonMonotonicTime,
    UsageError,
)

TerminationReason = Literal["cost_tol", "param_tol", "max_iter", "damping_max", "domain_failure"]

# Named parameter values for one model instance
ParamVector = Dict[str, float]


class TimeSeries(BaseModel):
    """Ordered (t, y) observations, the fitting target."""
    model_config = ConfigDict(frozen=True)

    times: Tuple[float, ...]
    values: Tuple[float, ...]

    @model_validator(mode="after")
    def _check_observations(self) -> "TimeSeries":
        if len(self.times) != len(self.values):
            raise LengthMismatch(f"{len(self.times)} times but {len(self.values)} values")
        if not self.times:
            raise EmptySeries("a series needs at least one observation")

        t = np.asarray(self.times, dtype=float)
        y = np.asarray(self.values, dtype=float)

        bad = np.flatnonzero(~np.isfinite(t) | ~np.isfinite(y))
        if bad.size:
            i = int(bad[0])
            raise NonFinite(f"non-finite observation at index {i}: ({self.times[i]!r}, {self.values[i]!r})")

        steps = np.flatnonzero(np.diff(t) <= 0)
        if steps.size:
            i = int(steps[0]) + 1
            raise NonMonotonicTime(f"time {self.times[i]!r} at index {i} does not exceed {self.times[i - 1]!r}")

        return self

    @property
    def n(self) -> int:
        return len(self.times)

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.times, dtype=float)

    @property
    def y(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


class SummaryStats(BaseModel):
    """Mean and total sum of squares of a series."""
    model_config = ConfigDict(frozen=True)

    n: int
    mean: float
    sst: float = Field(ge=0.0)


class FitOptions(BaseModel):
    """Levenberg-Marquardt and multi-start settings."""
    model_config = ConfigDict(frozen=True)

    max_iterations: int = Field(default_factory=lambda: config.FIT_MAX_ITERATIONS, gt=0)
    cost_tolerance: float = Field(default_factory=lambda: config.FIT_COST_TOLERANCE, gt=0)
    param_tolerance: float = Field(default_factory=lambda: config.FIT_PARAM_TOLERANCE, gt=0)
    initial_damping: float = Field(default_factory=lambda: config.FIT_INITIAL_DAMPING, gt=0)
    damping_up_factor: float = Field(default_factory=lambda: config.FIT_DAMPING_UP, gt=1)
    damping_down_factor: float = Field(default_factory=lambda: config.FIT_DAMPING_DOWN, gt=1)
    max_damping: float = Field(default_factory=lambda: config.FIT_MAX_DAMPING, gt=0)
    starts: int = Field(default_factory=lambda: config.FIT_STARTS, ge=1)
    perturbation_scale: float = Field(default_factory=lambda: config.FIT_PERTURBATION_SCALE, gt=0)
    seed: int = Field(default_factory=lambda: config.FIT_SEED, ge=0, lt=2**64)


class FitStatistics(BaseModel):
    """The five goodness-of-fit statistics plus the sizes they were computed from."""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    sse: float = Field(ge=0.0)
    sst: float = Field(ge=0.0)
    r_squared: float = Field(alias="r2", le=1.0)
    dfe: int = Field(ge=1)
    adj_r_squared: float = Field(alias="adj_r2", le=1.0)
    rmse: float = Field(ge=0.0)
    n: int
    k: int


class FitResult(BaseModel):
    """Converged parameters, solver diagnostics and statistics for one model."""
    model_config = ConfigDict(frozen=True, protected_namespaces=())

    model_id: str
    params: ParamVector
    converged: bool
    iterations: int
    final_sse: float = Field(ge=0.0)
    termination_reason: TerminationReason
    start_index: int = 0
    statistics: FitStatistics
    fixed: Tuple[str, ...] = ()
    sse_trace: Tuple[float, ...] = ()


class PopulationConfig(BaseModel):
    """Constants for the Malthusian and logistic population generators."""
    model_config = ConfigDict(frozen=True)

    p0: float = Field(gt=0.0, allow_inf_nan=False, description="Initial population (millions)")
    k: float = Field(allow_inf_nan=False, description="Malthusian rate (1/year)")
    p1: float = Field(allow_inf_nan=False, description="Logistic second root (millions)")
    A: float = Field(allow_inf_nan=False, description="Logistic coefficient (1/(millions*year))")


class BuildingConfig(BaseModel):
    """Single-compartment building with Newton cooling, constant heating and a proportional thermostat."""
    model_config = ConfigDict(frozen=True)

    K: float = Field(allow_inf_nan=False, description="Building transfer constant (1/hr)")
    K_U: float = Field(allow_inf_nan=False, description="Furnace/AC proportionality constant (1/hr)")
    T_D: float = Field(allow_inf_nan=False, description="Desired temperature")
    H0: float = Field(allow_inf_nan=False, description="Internal heating rate (deg/hr)")
    M0: float = Field(allow_inf_nan=False, description="Mean outside temperature")
    B: float = Field(allow_inf_nan=False, description="Outside temperature amplitude")
    T0: float = Field(allow_inf_nan=False, description="Initial inside temperature")

    @property
    def omega(self) -> float:
        return math.pi / 12

    @property
    def k1(self) -> float:
        k1 = self.K + self.K_U
        if k1 == 0:
            raise DegenerateConfig("K + K_U must be non-zero")
        return k1

    @property
    def B2(self) -> float:
        return (self.K_U * self.T_D + self.K * self.M0 + self.H0) / self.k1

    @property
    def B1(self) -> float:
        return self.B * self.K / self.k1

    @property
    def C(self) -> float:
        ratio = self.omega / self.k1
        return self.T0 - self.B2 + self.B1 / (1 + ratio ** 2)


class MarketConfig(BaseModel):
    """Linear demand/supply market with optional price-trend expectations."""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    d0: float = Field(allow_inf_nan=False)
    d1: float = Field(allow_inf_nan=False)
    d2: float = Field(default=0.0, allow_inf_nan=False)
    s0: float = Field(allow_inf_nan=False)
    s1: float = Field(allow_inf_nan=False)
    s2: float = Field(default=0.0, allow_inf_nan=False)
    lam: float = Field(alias="lambda", allow_inf_nan=False, description="Price adjustment speed")
    p_init: Optional[float] = Field(default=None, allow_inf_nan=False)
    D: Optional[float] = Field(default=None, allow_inf_nan=False, description="Integration constant")
    strict_eq21_signs: bool = False

    @model_validator(mode="after")
    def _check_initial_state(self) -> "MarketConfig":
        if self.p_init is None and self.D is None:
            raise UsageError("market config needs p_init or D")
        return self

    @property
    def a(self) -> float:
        return self.d0 + self.s0

    @property
    def b(self) -> float:
        return self.d1 + self.s1

    @property
    def c(self) -> float:
        return self.d2 + self.s2

    @property
    def initial_price(self) -> float:
        if self.p_init is not None:
            return self.p_init
        return self.integration_constant + self.a / self._nonzero_b()

    @property
    def integration_constant(self) -> float:
        if self.D is not None:
            return self.D
        return self.initial_price - self.a / self._nonzero_b()

    def _nonzero_b(self) -> float:
        if self.b == 0:
            raise DegenerateConfig("d1 + s1 must be non-zero")
        return self.b


class NoiseConfig(BaseModel):
    """Gaussian noise added to synthetic observations."""
    model_config = ConfigDict(frozen=True)

    sd: float = Field(default=0.0, ge=0.0, allow_inf_nan=False)
    seed: int = Field(default=0, ge=0, lt=2**64)


class DatasetDescriptor(BaseModel):
    """Where a fitted series came from and its size."""
    source: str
    n: int
    sst: float


class ReportEntry(BaseModel):
    """One fitted model in a report."""
    model_config = ConfigDict(protected_namespaces=(), populate_by_name=True)

    model_id: str
    params: ParamVector
    statistics: FitStatistics
    converged: bool
    termination_reason: TerminationReason
    start_index: int
    iterations: int


class Report(BaseModel):
    """Machine-readable fit report: entries, ranking and provenance."""
    model_config = ConfigDict(populate_by_name=True)

    dataset: DatasetDescriptor
    entries: List[ReportEntry] = Field(default_factory=list)
    ranking: List[str] = Field(default_factory=list)
    failures: Dict[str, str] = Field(default_factory=dict)
    version: str
    seed: int

    @model_validator(mode="after")
    def _check_ranking(self) -> "Report":
        if sorted(self.ranking) != sorted(entry.model_id for entry in self.entries):
            raise ValueError("ranking must be a permutation of the entry model ids")
        return self
