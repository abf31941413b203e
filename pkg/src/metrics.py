"""Goodness-of-fit statistics and model ranking."""

import logging
import math
from typing import List, Mapping, Optional, Sequence

import numpy as np

from src.data import series_stats
from src.errors import EmptyResiduals, MixedDatasets, NonPositiveDfe, ZeroVariance
from src.models import FitResult, FitStatistics, TimeSeries
from src.registry import registry

logger = logging.getLogger(__name__)

# Relative tolerance for "same dataset" checks when ranking
SAME_DATASET_TOLERANCE = 1e-12


def sse(residuals: Sequence[float]) -> float:
    """Sum of squared residuals."""
    r = np.asarray(residuals, dtype=float)
    if r.size == 0:
        raise EmptyResiduals("cannot sum an empty residual vector")
    return float(np.dot(r, r))


def r_squared(sse_value: float, sst: float) -> float:
    """Coefficient of determination 1 - SSE/SST; negative for fits worse than the mean."""
    if sst == 0:
        raise ZeroVariance("R^2 is undefined for a series with zero variance")
    return 1 - sse_value / sst


def dfe(n: int, k: int) -> int:
    if n - k < 1:
        raise NonPositiveDfe(f"{n} points leave no residual degrees of freedom for {k} parameters")
    return n - k


def rmse(sse_value: float, dfe_value: int) -> float:
    """Root mean squared error on the residual degrees of freedom, sqrt(SSE/dfe)."""
    if dfe_value < 1:
        raise NonPositiveDfe(f"dfe must be at least 1, got {dfe_value}")
    return math.sqrt(sse_value / dfe_value)


def adj_r_squared(r2: float, n: int, dfe_value: int) -> float:
    if dfe_value < 1:
        raise NonPositiveDfe(f"dfe must be at least 1, got {dfe_value}")
    return 1 - (1 - r2) * (n - 1) / dfe_value


def build_statistics(sse_value: float, sst: float, n: int, k: int) -> FitStatistics:
    """Assemble all five statistics from SSE, SST and the problem size.

    Raises:
        ZeroVariance: sst is zero
        NonPositiveDfe: n <= k
    """
    dof = dfe(n, k)
    r2 = r_squared(sse_value, sst)
    return FitStatistics(
        sse=sse_value,
        sst=sst,
        r_squared=r2,
        dfe=dof,
        adj_r_squared=adj_r_squared(r2, n, dof),
        rmse=rmse(sse_value, dof),
        n=n,
        k=k,
    )


def fit_statistics(model_id: str, params: Mapping[str, float], s: TimeSeries,
                   k: Optional[int] = None) -> FitStatistics:
    """Statistics of a parameterized model against a series.

    Args:
        model_id: Registered model id
        params: Parameter values
        s: Observations
        k: Number of estimated parameters; defaults to the model's full count

    Returns:
        FitStatistics for the model on s
    """
    predicted = registry.evaluate_series(model_id, params, s.times)
    summary = series_stats(s)
    return build_statistics(
        sse(s.y - predicted),
        summary.sst,
        s.n,
        registry.get(model_id).k if k is None else k,
    )


def check_identities(stats: FitStatistics, rel: float = 1e-12) -> List[str]:
    """Names of the FitStatistics identities that do not hold within rel.

    Returns:
        Empty list when the statistics are internally consistent
    """
    def close(actual: float, expected: float) -> bool:
        return math.isclose(actual, expected, rel_tol=rel, abs_tol=rel)

    violations = []
    if stats.dfe != stats.n - stats.k:
        violations.append("dfe")
    if stats.sst == 0 or not close(stats.r_squared, 1 - stats.sse / stats.sst):
        violations.append("r2")
    if stats.dfe < 1 or not close(stats.rmse, math.sqrt(stats.sse / stats.dfe)):
        violations.append("rmse")
    if stats.dfe < 1 or not close(stats.adj_r_squared,
                                  1 - (1 - stats.r_squared) * (stats.n - 1) / stats.dfe):
        violations.append("adj_r2")
    return violations


def rank_models(results: Sequence[FitResult]) -> List[FitResult]:
    """Order fits by adjusted R^2 (descending), then RMSE, then model id.

    Raises:
        MixedDatasets: If the fits were not made on the same series
    """
    if not results:
        return []

    reference = results[0].statistics
    for result in results[1:]:
        stats = result.statistics
        if stats.n != reference.n or not math.isclose(stats.sst, reference.sst, rel_tol=SAME_DATASET_TOLERANCE):
            raise MixedDatasets(
                f"{result.model_id} was fit on n={stats.n}, sst={stats.sst!r}; "
                f"{results[0].model_id} on n={reference.n}, sst={reference.sst!r}"
            )

    ranked = sorted(results, key=lambda r: (-r.statistics.adj_r_squared, r.statistics.rmse, r.model_id))
    logger.debug(f"Ranking: {[r.model_id for r in ranked]}")
    return ranked
