"""Time-series construction and summary statistics."""

from typing import Iterable

import numpy as np

from src.models import SummaryStats, TimeSeries


def build_series(times: Iterable[float], values: Iterable[float]) -> TimeSeries:
    """Build a validated time series.

    Args:
        times: Strictly increasing, finite abscissae
        values: Finite observations, one per time

    Returns:
        TimeSeries in input order

    Raises:
        LengthMismatch, NonFinite, NonMonotonicTime, EmptySeries
    """
    return TimeSeries(
        times=tuple(float(t) for t in times),
        values=tuple(float(y) for y in values),
    )


def series_stats(series: TimeSeries) -> SummaryStats:
    """Mean and total sum of squares about the mean."""
    y = series.y

    # Constant series are pinned to an exact zero so R^2 guards trigger reliably
    if np.all(y == y[0]):
        return SummaryStats(n=series.n, mean=float(y[0]), sst=0.0)

    mean = float(np.mean(y))
    deviations = y - mean
    return SummaryStats(n=series.n, mean=mean, sst=float(np.dot(deviations, deviations)))
