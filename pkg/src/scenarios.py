"""Closed-form scenario generators, presets and the RK4 verification oracle.

Time units differ per scenario and are not normalized: population curves use
years since 1900, the building temperature uses hours since midnight and the
market prices use months.

Synthetic noise is drawn from NumPy's ``PCG64`` bit generator seeded through
``SeedSequence(seed)`` and transformed with ``Generator.normal`` (ziggurat).
Both are covered by NumPy's stream-compatibility policy, so a seed reproduces
the same draws on every platform for a given NumPy release.
"""

import logging
import math
from pathlib import Path
from typing import Callable, Dict, Iterable, Sequence, Tuple, Type, Union

import numpy as np
import orjson
from pydantic import BaseModel, ValidationError

from src.config import config
from src.data import build_series
from src.errors import DataError, DegenerateConfig, PoleError, UsageError
from src.models import BuildingConfig, MarketConfig, NoiseConfig, PopulationConfig, TimeSeries

logger = logging.getLogger(__name__)

ScenarioConfig = Union[PopulationConfig, BuildingConfig, MarketConfig]
Rhs = Callable[[float, float], float]

PRESET_DIR = Path(__file__).parent / "presets"
PRESET_NAMES = ("eq4", "eq4_calibrated", "eq7", "eq18", "eq22", "eq24")


# Population kernels, shared with the fittable registry families

def malthusian_curve(p0: float, k: float, t: np.ndarray) -> np.ndarray:
    return p0 * np.exp(k * t)


def logistic_denominator(p0: float, p1: float, A: float, t: np.ndarray) -> np.ndarray:
    return p0 + (p1 - p0) * np.exp(-A * p1 * t)


def logistic_pole_mask(p0: float, p1: float, A: float, t: np.ndarray) -> np.ndarray:
    """True where the logistic denominator is numerically singular."""
    denominator = logistic_denominator(p0, p1, A, t)
    return (np.abs(denominator) < config.POLE_EPSILON * abs(p0 * p1)) | (denominator == 0)


def logistic_curve(p0: float, p1: float, A: float, t: np.ndarray) -> np.ndarray:
    return p0 * p1 / logistic_denominator(p0, p1, A, t)


# Closed forms over arrays of times

def _malthusian_values(cfg: PopulationConfig, t: np.ndarray) -> np.ndarray:
    return malthusian_curve(cfg.p0, cfg.k, t)


def _logistic_values(cfg: PopulationConfig, t: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        poles = np.flatnonzero(logistic_pole_mask(cfg.p0, cfg.p1, cfg.A, t))
        if poles.size:
            i = int(poles[0])
            raise PoleError("logistic denominator vanishes", index=i, t=float(t[i]))
        return logistic_curve(cfg.p0, cfg.p1, cfg.A, t)


def _f1(cfg: BuildingConfig, t: np.ndarray) -> np.ndarray:
    ratio = cfg.omega / cfg.k1
    return (np.cos(cfg.omega * t) + ratio * np.sin(cfg.omega * t)) / (1 + ratio ** 2)


def _temperature_values(cfg: BuildingConfig, t: np.ndarray) -> np.ndarray:
    return cfg.B2 - cfg.B1 * _f1(cfg, t) + cfg.C * np.exp(-cfg.k1 * t)


def _price_linear_values(cfg: MarketConfig, t: np.ndarray) -> np.ndarray:
    p_hat = equilibrium_price(cfg.d0, cfg.d1, cfg.s0, cfg.s1)
    rate = -cfg.lam * cfg.b
    return (cfg.initial_price - p_hat) * np.exp(rate * t) + p_hat


def _price_expectations_values(cfg: MarketConfig, t: np.ndarray) -> np.ndarray:
    lag = cfg.c * cfg.lam - 1
    if lag == 0:
        raise DegenerateConfig("c * lambda - 1 must be non-zero")
    if cfg.b == 0:
        raise DegenerateConfig("b = d1 + s1 must be non-zero")
    return cfg.integration_constant * np.exp(cfg.lam * cfg.b * t / lag) + cfg.a / cfg.b


SCENARIOS: Dict[str, Tuple[Type[BaseModel], Callable[..., np.ndarray]]] = {
    "malthusian": (PopulationConfig, _malthusian_values),
    "logistic": (PopulationConfig, _logistic_values),
    "temperature": (BuildingConfig, _temperature_values),
    "price_linear": (MarketConfig, _price_linear_values),
    "price_expectations": (MarketConfig, _price_expectations_values),
}


def _at(values_fn: Callable[..., np.ndarray], cfg: ScenarioConfig, t: float) -> float:
    return float(values_fn(cfg, np.array([float(t)]))[0])


# Public scalar operations

def malthusian(cfg: PopulationConfig, t: float) -> float:
    """Exponential growth p0 * exp(k t)."""
    return _at(_malthusian_values, cfg, t)


def logistic(cfg: PopulationConfig, t: float) -> float:
    """Logistic solution p0 p1 / (p0 + (p1 - p0) exp(-A p1 t)).

    Raises:
        PoleError: When the denominator is below POLE_EPSILON * |p0 p1|
    """
    return _at(_logistic_values, cfg, t)


def building_temperature(cfg: BuildingConfig, t: float) -> float:
    """Inside temperature B2 - B1 F1(t) + C exp(-k1 t) at hours since midnight."""
    return _at(_temperature_values, cfg, t)


def equilibrium_price(d0: float, d1: float, s0: float, s1: float) -> float:
    """Price where demand meets supply, (d0 + s0) / (d1 + s1)."""
    if d1 + s1 == 0:
        raise DegenerateConfig("d1 + s1 must be non-zero")
    return (d0 + s0) / (d1 + s1)


def market_quantities(cfg: MarketConfig, p: float, p_dot: float) -> Tuple[float, float]:
    """Quantity demanded and supplied at price p and price trend p_dot.

    Supply follows the worked-example sign pattern -s0 + s1 p - s2 p_dot unless
    ``strict_eq21_signs`` selects -s0 - s1 p - s2 p_dot.
    """
    q_d = cfg.d0 - cfg.d1 * p + cfg.d2 * p_dot
    if cfg.strict_eq21_signs:
        q_s = -cfg.s0 - cfg.s1 * p - cfg.s2 * p_dot
    else:
        q_s = -cfg.s0 + cfg.s1 * p - cfg.s2 * p_dot
    return q_d, q_s


def market_price_linear(cfg: MarketConfig, t: float) -> float:
    """Price relaxing toward equilibrium, [p(0) - p_hat] e^{ct} + p_hat with c = -lambda (d1 + s1)."""
    return _at(_price_linear_values, cfg, t)


def market_price_expectations(cfg: MarketConfig, t: float) -> float:
    """Price with expectation terms, D e^{lambda b t / (c lambda - 1)} + a / b."""
    return _at(_price_expectations_values, cfg, t)


def generate(scenario_id: str, cfg: ScenarioConfig, times: Sequence[float],
             noise: NoiseConfig = NoiseConfig()) -> TimeSeries:
    """Sample a scenario's closed form on a grid, optionally adding Gaussian noise.

    Args:
        scenario_id: One of SCENARIOS
        cfg: Config matching the scenario
        times: Strictly increasing sample times
        noise: Noise level and seed; sd=0 returns exact closed-form values

    Returns:
        TimeSeries of (possibly noisy) observations
    """
    config_cls, values_fn = _lookup(scenario_id)
    if not isinstance(cfg, config_cls):
        raise UsageError(f"scenario {scenario_id} expects {config_cls.__name__}, got {type(cfg).__name__}")

    grid = build_series(times, [0.0] * len(times))
    values = values_fn(cfg, grid.t)

    if noise.sd > 0:
        rng = np.random.Generator(np.random.PCG64(noise.seed))
        values = values + rng.normal(0.0, noise.sd, size=grid.n)

    logger.debug(f"Generated {grid.n} points for {scenario_id} (sd={noise.sd}, seed={noise.seed})")
    return build_series(grid.times, values)


def _lookup(scenario_id: str) -> Tuple[Type[BaseModel], Callable[..., np.ndarray]]:
    if scenario_id not in SCENARIOS:
        raise UsageError(f"unknown scenario {scenario_id!r}; choose from {', '.join(SCENARIOS)}")
    return SCENARIOS[scenario_id]


# Scenario configs as JSON documents

def config_from_json(scenario_id: str, document: Union[bytes, str]) -> ScenarioConfig:
    """Parse a scenario config document for the given scenario."""
    config_cls, _ = _lookup(scenario_id)
    try:
        data = orjson.loads(document)
    except orjson.JSONDecodeError as e:
        raise DataError(f"invalid scenario config JSON: {e}") from e

    try:
        return config_cls.model_validate(data)  # type: ignore[return-value]
    except ValidationError as e:
        raise DataError(f"config does not fit scenario {scenario_id}: {e}") from e


def config_to_json(cfg: ScenarioConfig) -> bytes:
    return orjson.dumps(cfg.model_dump(by_alias=True, exclude_none=True), option=orjson.OPT_INDENT_2)


def load_preset(scenario_id: str, preset: str) -> ScenarioConfig:
    """Load a shipped preset by name (eq4, eq7, eq18, ...) or a JSON file path."""
    path = PRESET_DIR / f"{preset}.json" if preset in PRESET_NAMES else Path(preset)
    try:
        document = path.read_bytes()
    except OSError as e:
        raise DataError(f"cannot read preset {preset}: {e}") from e
    return config_from_json(scenario_id, document)


# RK4 oracle

def integrate_rk4(rhs: Rhs, y0: float, times: Iterable[float], t0: float = 0.0,
                  step: float = 0.0) -> np.ndarray:
    """Integrate dy/dt = rhs(t, y) from (t0, y0) with classic fourth-order Runge-Kutta.

    Each interval up to the next requested time is split into equal steps no
    longer than ``step`` so every sample is hit exactly.

    Args:
        rhs: Right-hand side f(t, y)
        y0: State at t0
        times: Non-decreasing sample times, all >= t0
        t0: Initial time
        step: Maximum step; defaults to RK4_STEP

    Returns:
        State at each requested time
    """
    h_max = step or config.RK4_STEP
    t, y = t0, y0
    samples = []

    for target in times:
        if target < t:
            raise UsageError("RK4 sample times must be non-decreasing and not before t0")
        n_steps = math.ceil((target - t) / h_max - 1e-9)
        if n_steps > 0:
            h = (target - t) / n_steps
            for _ in range(n_steps):
                k1 = rhs(t, y)
                k2 = rhs(t + h / 2, y + h * k1 / 2)
                k3 = rhs(t + h / 2, y + h * k2 / 2)
                k4 = rhs(t + h, y + h * k3)
                y = y + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6
                t = t + h
            t = target
        samples.append(y)

    return np.array(samples)


def _population_rhs(cfg: PopulationConfig, scenario_id: str) -> Rhs:
    if scenario_id == "malthusian":
        return lambda t, p: cfg.k * p
    return lambda t, p: -cfg.A * p * (p - cfg.p1)


def _temperature_rhs(cfg: BuildingConfig) -> Rhs:
    def rhs(t: float, T: float) -> float:
        outside = cfg.M0 - cfg.B * math.cos(cfg.omega * t)
        return cfg.K * (outside - T) + cfg.H0 + cfg.K_U * (cfg.T_D - T)
    return rhs


def _price_linear_rhs(cfg: MarketConfig) -> Rhs:
    def rhs(t: float, p: float) -> float:
        q_d, q_s = market_quantities(cfg, p, 0.0)
        return cfg.lam * (q_d - q_s)
    return rhs


def _price_expectations_rhs(cfg: MarketConfig) -> Rhs:
    # lambda (q_d - q_s) = lambda (a - b p + c p') solved for p'
    return lambda t, p: cfg.lam * (cfg.a - cfg.b * p) / (1 - cfg.lam * cfg.c)


def oracle_rhs(scenario_id: str, cfg: ScenarioConfig) -> Tuple[Rhs, float]:
    """Differential equation behind a scenario and its initial state."""
    _lookup(scenario_id)
    if isinstance(cfg, PopulationConfig):
        return _population_rhs(cfg, scenario_id), cfg.p0
    if isinstance(cfg, BuildingConfig):
        return _temperature_rhs(cfg), cfg.T0
    if scenario_id == "price_linear":
        return _price_linear_rhs(cfg), cfg.initial_price
    return _price_expectations_rhs(cfg), cfg.initial_price


def verify_closed_form(scenario_id: str, cfg: ScenarioConfig, times: Sequence[float],
                       step: float = 0.0) -> Dict[str, float]:
    """Compare a closed form against RK4 integration of its ODE from t = 0.

    Returns:
        Dict with max_abs and max_rel deviations over the requested times
    """
    _, values_fn = _lookup(scenario_id)
    rhs, y0 = oracle_rhs(scenario_id, cfg)
    grid = np.asarray(times, dtype=float)

    closed = values_fn(cfg, grid)
    integrated = integrate_rk4(rhs, y0, grid, step=step)

    deviation = np.abs(closed - integrated)
    scale = np.maximum(np.abs(integrated), np.finfo(float).tiny)
    return {
        "max_abs": float(np.max(deviation)),
        "max_rel": float(np.max(deviation / scale)),
    }
