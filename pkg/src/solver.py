"""Damped least-squares fitting with finite-difference Jacobians and seeded multi-start."""

import logging
import math
from typing import Iterable, List, Mapping, Optional, Sequence

import numpy as np
from scipy import linalg

from src.data import series_stats
from src.errors import AllStartsFailed, DomainError, IncompleteParams, InitDomainError, TooFewPoints, UsageError
from src.metrics import build_statistics
from src.models import FitOptions, FitResult, ParamVector, TerminationReason, TimeSeries
from src.registry import ModelSpec, registry

logger = logging.getLogger(__name__)

SQRT_EPS = math.sqrt(np.finfo(float).eps)

# Damping is scaled by diag(J^T J), floored relative to its largest entry so flat columns stay regularized
DIAGONAL_FLOOR_RATIO = 1e-9


def residuals(model_id: str, params: Mapping[str, float], s: TimeSeries) -> np.ndarray:
    """Observed minus predicted at every sample."""
    return s.y - registry.evaluate_series(model_id, params, s.times)


def _shifted(spec: ModelSpec, base: np.ndarray, index: int, delta: float,
           t: np.ndarray) -> Optional[np.ndarray]:
    shifted = base.copy()
    shifted[index] += delta
    try:
        return registry.evaluate_array(spec, shifted, t)
    except DomainError:
        return None


def _column(spec: ModelSpec, base: np.ndarray, index: int, t: np.ndarray) -> np.ndarray:
    h = SQRT_EPS * max(abs(base[index]), 1.0)
    forward = _shifted(spec, base, index, h, t)
    backward = _shifted(spec, base, index, -h, t)
    # actual representable offsets
    up = (base[index] + h) - base[index]
    down = base[index] - (base[index] - h)

    if forward is not None and backward is not None:
        return (forward - backward) / (up + down)

    centre = registry.evaluate_array(spec, base, t)
    if forward is not None:
        return (forward - centre) / up
    if backward is not None:
        return (centre - backward) / down
    raise DomainError(f"{spec.id}: both difference points for {spec.param_names[index]} leave the domain")


def _jacobian(spec: ModelSpec, values: np.ndarray, t: np.ndarray, columns: Sequence[int]) -> np.ndarray:
    jac = np.empty((t.size, len(columns)))
    for j, index in enumerate(columns):
        jac[:, j] = _column(spec, values, index, t)
    return jac


def jacobian_fd(model_id: str, params: Mapping[str, float], times: Sequence[float],
                names: Optional[Sequence[str]] = None) -> np.ndarray:
    """Central-difference Jacobian of the model output with respect to its parameters.

    Args:
        model_id: Registered model id
        params: Point of differentiation
        times: Sample times (rows)
        names: Parameters to differentiate (columns); all of them by default

    Returns:
        n x k matrix with entry (i, j) = d evaluate / d p_j at t_i

    Raises:
        DomainError: When neither shifted point stays in the domain
    """
    spec = registry.get(model_id)
    values = registry.param_array(spec, params)
    columns = [_index(spec, name) for name in (names or spec.param_names)]
    return _jacobian(spec, values, np.asarray(times, dtype=float), columns)


def _index(spec: ModelSpec, name: str) -> int:
    if name not in spec.param_names:
        raise IncompleteParams(f"{spec.id} has no parameter {name!r}")
    return spec.param_names.index(name)


def _cost(spec: ModelSpec, values: np.ndarray, t: np.ndarray, y: np.ndarray) -> Optional[float]:
    """SSE at a trial point, or None if the point is unusable."""
    try:
        r = y - registry.evaluate_array(spec, values, t)
    except DomainError:
        return None
    cost = float(np.dot(r, r))
    return cost if math.isfinite(cost) else None


def _damped_step(normal: np.ndarray, gradient: np.ndarray, scale: np.ndarray,
                 damping: float) -> Optional[np.ndarray]:
    try:
        factor = linalg.cho_factor(normal + damping * np.diag(scale))
    except (linalg.LinAlgError, ValueError):
        # not positive definite, or non-finite entries
        return None
    step = linalg.cho_solve(factor, gradient)
    return step if np.all(np.isfinite(step)) else None


def fit(model_id: str, s: TimeSeries, init: Mapping[str, float], opts: Optional[FitOptions] = None,
        fixed: Iterable[str] = ()) -> FitResult:
    """Levenberg-Marquardt fit of one model from one starting point.

    Args:
        model_id: Registered model id
        s: Observations
        init: Starting parameters; must be inside the model domain on s.times
        opts: Solver settings, FitOptions() by default
        fixed: Parameters held at their initial values

    Returns:
        FitResult; converged is False (not an error) on max_iter, damping_max or domain_failure

    Raises:
        TooFewPoints: s.n does not exceed the number of free parameters
        InitDomainError: init is outside the domain
    """
    opts = opts or FitOptions()
    spec = registry.get(model_id)
    values = registry.param_array(spec, init)

    held = tuple(dict.fromkeys(fixed))
    held_indices = {_index(spec, name) for name in held}
    free = [i for i in range(spec.k) if i not in held_indices]
    if not free:
        raise UsageError(f"{model_id}: at least one parameter must be free")
    if s.n <= len(free):
        raise TooFewPoints(f"{model_id} needs more than {len(free)} points, the series has {s.n}")

    t, y = s.t, s.y
    try:
        r = y - registry.evaluate_array(spec, values, t)
    except DomainError as e:
        raise InitDomainError(f"initial {model_id} parameters are outside the domain: {e}", index=e.index, t=e.t) from e

    cost = float(np.dot(r, r))
    if not math.isfinite(cost):
        raise InitDomainError(f"initial {model_id} residuals overflow")
    trace = [cost]
    damping = opts.initial_damping
    iterations = 0
    reason: TerminationReason = "cost_tol" if cost == 0 else "max_iter"

    while cost > 0 and iterations < opts.max_iterations:
        iterations += 1
        try:
            jac = _jacobian(spec, values, t, free)
        except DomainError as e:
            logger.debug(f"{model_id}: Jacobian failed at iteration {iterations}: {e}")
            reason = "domain_failure"
            break
        if not np.all(np.isfinite(jac)):
            reason = "domain_failure"
            break

        normal = jac.T @ jac
        gradient = jac.T @ r
        diagonal = np.diag(normal)
        scale = np.maximum(diagonal, max(DIAGONAL_FLOOR_RATIO * float(np.max(diagonal)), np.finfo(float).tiny))
        tolerance = opts.param_tolerance * (float(np.linalg.norm(values[free])) + opts.param_tolerance)

        accepted: Optional[np.ndarray] = None
        trial_cost = cost
        stalled = False
        while damping <= opts.max_damping:
            step = _damped_step(normal, gradient, scale, damping)
            if step is None:
                damping *= opts.damping_up_factor
                continue

            trial = values.copy()
            trial[free] += step
            candidate = _cost(spec, trial, t, y)
            if candidate is not None and candidate < cost:
                accepted, trial_cost = trial, candidate
                break
            if float(np.linalg.norm(step)) <= tolerance:
                stalled = True
                break
            damping *= opts.damping_up_factor

        if accepted is None:
            reason = "param_tol" if stalled else "damping_max"
            break

        step_norm = float(np.linalg.norm(accepted[free] - values[free]))
        reduction = (cost - trial_cost) / cost
        values, cost = accepted, trial_cost
        r = y - registry.evaluate_array(spec, values, t)
        trace.append(cost)
        damping = max(damping / opts.damping_down_factor, np.finfo(float).eps)

        if cost == 0 or reduction <= opts.cost_tolerance:
            reason = "cost_tol"
            break
        if step_norm <= tolerance:
            reason = "param_tol"
            break

    params = dict(zip(spec.param_names, (float(v) for v in values)))
    statistics = build_statistics(cost, series_stats(s).sst, s.n, len(free))
    logger.debug(f"{model_id}: {reason} after {iterations} iterations, sse={cost:.6g}")

    return FitResult(
        model_id=model_id,
        params=params,
        converged=reason in ("cost_tol", "param_tol"),
        iterations=iterations,
        final_sse=cost,
        termination_reason=reason,
        statistics=statistics,
        fixed=held,
        sse_trace=tuple(trace),
    )


def perturbed_start(base: Mapping[str, float], opts: FitOptions, start_index: int,
                    fixed: Iterable[str] = ()) -> ParamVector:
    """Start `start_index` of a multi-start run: each free component times exp(u), u ~ U[-scale, scale].

    The stream depends only on (seed, start_index), so starts can be drawn in any order.
    """
    held = set(fixed)
    rng = np.random.default_rng([opts.seed, start_index])
    factors = np.exp(rng.uniform(-opts.perturbation_scale, opts.perturbation_scale, size=len(base)))
    return {
        name: value if name in held else float(value * factor)
        for (name, value), factor in zip(base.items(), factors)
    }


def multi_start_fit(model_id: str, s: TimeSeries, opts: Optional[FitOptions] = None,
                    init: Optional[Mapping[str, float]] = None, fixed: Iterable[str] = ()) -> FitResult:
    """Fit from the default guess plus seeded perturbations of it and keep the lowest SSE.

    Args:
        model_id: Registered model id
        s: Observations
        opts: Solver settings; starts and seed control the restarts
        init: Base guess instead of initial_guess(model_id, s)
        fixed: Parameters held at their base values

    Returns:
        Best FitResult; ties go to the lowest start_index

    Raises:
        AllStartsFailed: Every start was outside the domain
    """
    opts = opts or FitOptions()
    held = tuple(fixed)
    spec = registry.get(model_id)
    guess = dict(init) if init is not None else registry.initial_guess(model_id, s)
    base = {name: guess[name] for name in spec.param_names if name in guess}
    if len(base) != len(guess):
        raise IncompleteParams(f"{model_id}: unexpected parameters in {sorted(guess)}")

    best: Optional[FitResult] = None
    failures: List[str] = []
    for index in range(opts.starts):
        start = base if index == 0 else perturbed_start(base, opts, index, held)
        try:
            result = fit(model_id, s, start, opts, held)
        except DomainError as e:
            logger.debug(f"{model_id}: start {index} failed: {e}")
            failures.append(f"start {index}: {e}")
            continue
        if best is None or result.final_sse < best.final_sse:
            best = result.model_copy(update={"start_index": index})

    if best is None:
        raise AllStartsFailed(f"{model_id}: all {opts.starts} starts failed; first: {failures[0]}")

    logger.info(
        f"{model_id}: best of {opts.starts} starts is #{best.start_index} "
        f"(sse={best.final_sse:.6g}, {best.termination_reason})"
    )
    return best
