"""Model registry: the parametric families, their evaluation and starting guesses."""

import logging
import math
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Type

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from src.errors import DomainError, IncompleteParams, NonFinite, PoleError, TooFewPoints, UnknownModel
from src.models import ParamVector, TimeSeries
from src.scenarios import logistic_curve, logistic_pole_mask, malthusian_curve

logger = logging.getLogger(__name__)

Evaluator = Callable[[Mapping[str, float], np.ndarray], np.ndarray]
Guard = Callable[[Mapping[str, float], np.ndarray], np.ndarray]
Guesser = Callable[[TimeSeries], ParamVector]

TWO_PI = 2 * math.pi


class ModelSpec(BaseModel):
    """A parametric family: identifier, parameters, evaluation rule and guess rule."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    id: str
    groups: Tuple[str, ...]
    param_names: Tuple[str, ...]
    formula: str
    evaluator: Evaluator
    guesser: Guesser
    domain_guard: Optional[Guard] = None
    guard_error: Type[DomainError] = DomainError
    literal_rendering: bool = False

    @model_validator(mode="after")
    def _check_names(self) -> "ModelSpec":
        if not self.param_names or len(set(self.param_names)) != len(self.param_names):
            raise ValueError(f"{self.id}: parameter names must be non-empty and unique")
        return self

    @property
    def k(self) -> int:
        return len(self.param_names)


# Series heuristics shared by the guessers

def _span(s: TimeSeries) -> float:
    span = s.times[-1] - s.times[0]
    return span if span > 0 else 1.0


def _growth_rate(s: TimeSeries) -> float:
    """ln(y_n / y_1) / (t_n - t_1) when the end values share a sign, else 0."""
    first, last = s.values[0], s.values[-1]
    if s.n < 2 or first * last <= 0:
        return 0.0
    return math.log(last / first) / (s.times[-1] - s.times[0])


def _amplitude(s: TimeSeries) -> float:
    return (max(s.values) - min(s.values)) / 2


def _mean(s: TimeSeries) -> float:
    return float(np.mean(s.y))


def _everywhere(condition: bool, t: np.ndarray) -> np.ndarray:
    return np.full(t.shape, condition, dtype=bool)


# Population families

def _nelder(p: Mapping[str, float], t: np.ndarray) -> np.ndarray:
    return p["A"] * (1 + np.exp(-(p["lambda"] * p["k"] * t) / p["theta"])) ** (-p["theta"])


def _nelder_guard(p: Mapping[str, float], t: np.ndarray) -> np.ndarray:
    return _everywhere(p["theta"] != 0, t)


def _nelder_guess(s: TimeSeries) -> ParamVector:
    return {"A": s.values[-1], "k": 1.0, "lambda": 1.0, "theta": 1.0}


def _mcmillan1980(p: Mapping[str, float], t: np.ndarray) -> np.ndarray:
    return p["A"] * (np.exp(-p["k2"] * t) - np.exp(-p["k1"] * t))


def _mcmillan1980_guess(s: TimeSeries) -> ParamVector:
    k2 = -_growth_rate(s)
    k1 = abs(k2) + 10 / _span(s)
    t_n = s.times[-1]
    shape = float(np.exp(-k2 * t_n) - np.exp(-k1 * t_n))
    amplitude = s.values[-1] / shape if shape != 0 and math.isfinite(shape) else s.values[-1]
    return {"A": amplitude, "k1": k1, "k2": k2}


def _mcmillan1970_denominator(p: Mapping[str, float], t: np.ndarray) -> np.ndarray:
    return (p["x"] + p["c"]) - np.exp(-p["x"] * t) / (p["x"] + p["c1"])


def _mcmillan1970(p: Mapping[str, float], t: np.ndarray) -> np.ndarray:
    numerator = np.exp(-p["x"] * t - p["c"] * t + p["c"] * p["d"])
    return p["a"] * numerator / _mcmillan1970_denominator(p, t)


def _mcmillan1970_guard(p: Mapping[str, float], t: np.ndarray) -> np.ndarray:
    if p["x"] + p["c1"] == 0:
        return _everywhere(False, t)
    return _mcmillan1970_denominator(p, t) != 0


def _mcmillan1970_guess(s: TimeSeries) -> ParamVector:
    # x = 0 and c1 = 2 / c leave a constant denominator c / 2
    c = 1 / _span(s)
    return {"a": s.values[0] * c / 2, "c": c, "c1": 2 / c, "d": s.times[0], "x": 0.0}


def _mcnally1971(p: Mapping[str, float], t: np.ndarray) -> np.ndarray:
    positive = t > 0
    powered = np.where(positive, np.power(np.where(positive, t, 1.0), p["b"]), 0.0)
    return p["a"] * powered * np.exp(-p["c"] * t)


def _mcnally1971_guard(p: Mapping[str, float], t: np.ndarray) -> np.ndarray:
    # 0^b is pinned to 0 for b > 0 only
    return (t > 0) | ((t == 0) & (p["b"] > 0))


def _mcnally1971_guess(s: TimeSeries) -> ParamVector:
    t, y = s.t, s.y
    usable = t > 0
    if np.count_nonzero(usable) >= 3 and np.all(y[usable] > 0):
        # ln y = ln a + b ln t - c t
        design = np.column_stack([np.ones(np.count_nonzero(usable)), np.log(t[usable]), t[usable]])
        (log_a, b, minus_c), *_ = np.linalg.lstsq(design, np.log(y[usable]), rcond=None)
        if np.any(t == 0):
            b = max(b, 1e-3)
        return {"a": np.exp(log_a), "b": float(b), "c": float(-minus_c)}
    return {"a": _mean(s), "b": 1e-3, "c": 0.0}


def _yang1989(p: Mapping[str, float], t: np.ndarray) -> np.ndarray:
    return p["a"] * np.exp(-p["x"] * t) / (1 + np.exp(-p["c"] * (t - p["d"])))


def _yang1989_guess(s: TimeSeries) -> ParamVector:
    span = _span(s)
    x = -_growth_rate(s)
    c = 4 / span
    d = s.times[0] - span
    a = s.values[0] * np.exp(x * s.times[0]) * (1 + np.exp(-c * (s.times[0] - d)))
    return {"a": a, "c": c, "d": d, "x": x}


# Temperature families (gauss2, exp2 and sin3 are shared with prices)

def _exp_sin(p: Mapping[str, float], t: np.ndarray) -> np.ndarray:
    return (p["a0"] + p["b1"] * np.sin(p["a1"] * t - p["a2"])) * np.exp(p["f"] * t)


def _exp_sin_guess(s: TimeSeries) -> ParamVector:
    return {"f": 0.0, "a0": _mean(s), "a1": TWO_PI / _span(s), "a2": 0.0, "b1": _amplitude(s)}


def _fourier2(p: Mapping[str, float], t: np.ndarray) -> np.ndarray:
    wt = p["w"] * t
    return (p["a0"] + p["a1"] * np.cos(wt) + p["b1"] * np.sin(wt)
            + p["a2"] * np.cos(2 * wt) + p["b2"] * np.sin(2 * wt))


def _fourier2_guess(s: TimeSeries) -> ParamVector:
    return {"a0": _mean(s), "a1": _amplitude(s), "b1": 0.0, "a2": 0.0, "b2": 0.0, "w": TWO_PI / _span(s)}


def _gauss2(p: Mapping[str, float], t: np.ndarray) -> np.ndarray:
    return (p["a1"] * np.exp(-(((t - p["b1"]) / p["c1"]) ** 2))
            + p["a2"] * np.exp(-(((t - p["b2"]) / p["c2"]) ** 2)))


def _gauss2_guard(p: Mapping[str, float], t: np.ndarray) -> np.ndarray:
    return _everywhere(p["c1"] != 0 and p["c2"] != 0, t)


def _gauss2_guess(s: TimeSeries) -> ParamVector:
    first, second = np.argsort(-s.y, kind="stable")[:2]
    width = _span(s) / 4
    return {
        "a1": s.values[first], "b1": s.times[first], "c1": width,
        "a2": s.values[second], "b2": s.times[second], "c2": width,
    }


def _exp2(p: Mapping[str, float], t: np.ndarray) -> np.ndarray:
    return p["a"] * np.exp(p["b"] * t) + p["c"] * np.exp(p["d"] * t)


def _exp2_guess(s: TimeSeries) -> ParamVector:
    rate = _growth_rate(s)
    return {"a": s.values[0] * np.exp(-rate * s.times[0]), "b": rate, "c": 0.0, "d": -rate}


def _sin3(p: Mapping[str, float], t: np.ndarray) -> np.ndarray:
    return sum(p[f"a{i}"] * np.sin(p[f"b{i}"] * t + p[f"c{i}"]) for i in (1, 2, 3))


def _sin3_guess(s: TimeSeries) -> ParamVector:
    guess: ParamVector = {}
    for i in (1, 2, 3):
        guess.update({f"a{i}": _amplitude(s), f"b{i}": i * TWO_PI / _span(s), f"c{i}": 0.0})
    return guess


# Price families

def _distr_exp_base(p: Mapping[str, float], t: np.ndarray) -> np.ndarray:
    return p["A"] * t ** 2 + p["B"] * t + p["C"]


def _distr_exp(p: Mapping[str, float], t: np.ndarray) -> np.ndarray:
    return _distr_exp_base(p, t) ** (p["F"] * np.power(t, p["G"]))


def _distr_exp_guard(p: Mapping[str, float], t: np.ndarray) -> np.ndarray:
    return (t >= 0) & (_distr_exp_base(p, t) > 0)


def _distr_exp_guess(s: TimeSeries) -> ParamVector:
    mean = _mean(s)
    base = mean if mean > 0 and mean != 1 else math.e
    t_n, y_n = s.times[-1], s.values[-1]
    exponent = math.log(y_n) / (t_n * math.log(base)) if y_n > 0 and t_n > 0 else 0.0
    return {"A": 0.0, "B": 0.0, "C": base, "F": exponent, "G": 1.0}


def _rat21(p: Mapping[str, float], t: np.ndarray) -> np.ndarray:
    return (p["p1"] * t ** 2 + p["p2"] * t + p["p3"]) / (t + p["q1"])


def _rat21_guard(p: Mapping[str, float], t: np.ndarray) -> np.ndarray:
    return (t + p["q1"]) != 0


def _rat21_guess(s: TimeSeries) -> ParamVector:
    # keeps t + q1 >= span over the data and starts from the flat line y = mean
    q1 = _span(s) - s.times[0]
    mean = _mean(s)
    return {"p1": 0.0, "p2": mean, "p3": mean * q1, "q1": q1}


# Empirical solutions, fittable directly

def _malthusian(p: Mapping[str, float], t: np.ndarray) -> np.ndarray:
    return malthusian_curve(p["p0"], p["k"], t)


def _malthusian_guess(s: TimeSeries) -> ParamVector:
    rate = _growth_rate(s)
    return {"p0": s.values[0] * np.exp(-rate * s.times[0]), "k": rate}


def _logistic(p: Mapping[str, float], t: np.ndarray) -> np.ndarray:
    return logistic_curve(p["p0"], p["p1"], p["A"], t)


def _logistic_guard(p: Mapping[str, float], t: np.ndarray) -> np.ndarray:
    return ~logistic_pole_mask(p["p0"], p["p1"], p["A"], t)


def _logistic_fallback(s: TimeSeries) -> ParamVector:
    rate = _growth_rate(s)
    p0 = s.values[0] * np.exp(-rate * s.times[0]) or 1.0
    peak = max(s.values, key=abs)
    p1 = 2 * peak if peak != 0 else 1.0
    return {"p0": p0, "p1": p1, "A": rate / p1}


def _logistic_regression(s: TimeSeries) -> Optional[ParamVector]:
    """Fit d ln y/dt = A p1 - A y by least squares on the data.

    Convex growth in ln y gives a negative carrying level p1, which no positive start can reach.
    """
    y, t = s.y, s.t
    if s.n < 3 or np.any(y <= 0) or np.ptp(y) == 0:
        return None
    slope = np.gradient(np.log(y), t, edge_order=2)
    beta, alpha = np.polyfit(y, slope, 1)
    if beta == 0:
        return None
    A, p1 = -beta, -alpha / beta
    decay = np.exp(-A * p1 * t[0])
    # logistic through (t_1, y_1), solved for its value at t = 0
    p0 = y[0] * p1 * decay / (p1 - y[0] + y[0] * decay)
    guess = {"p0": float(p0), "p1": float(p1), "A": float(A)}
    return guess if all(math.isfinite(v) and v != 0 for v in guess.values()) else None


def _logistic_guess(s: TimeSeries) -> ParamVector:
    with np.errstate(all="ignore"):
        guess = _logistic_regression(s) or _logistic_fallback(s)
    if not np.all(_logistic_guard(guess, s.t)):
        guess["A"] = 0.0
    return guess


_SPECS = [
    ModelSpec(id="nelder1961", groups=("population",), param_names=("A", "k", "lambda", "theta"),
              formula="A*(1 + exp(-(lambda*k*t)/theta))^(-theta)", evaluator=_nelder,
              domain_guard=_nelder_guard, guesser=_nelder_guess, literal_rendering=True),
    ModelSpec(id="mcmillan1980", groups=("population",), param_names=("A", "k1", "k2"),
              formula="A*(exp(-k2*t) - exp(-k1*t))", evaluator=_mcmillan1980, guesser=_mcmillan1980_guess),
    ModelSpec(id="mcmillan1970", groups=("population",), param_names=("a", "c", "c1", "d", "x"),
              formula="a*exp(-x*t - c*t + c*d) / ((x + c) - exp(-x*t)/(x + c1))", evaluator=_mcmillan1970,
              domain_guard=_mcmillan1970_guard, guesser=_mcmillan1970_guess, literal_rendering=True),
    ModelSpec(id="mcnally1971", groups=("population",), param_names=("a", "b", "c"),
              formula="a*t^b*exp(-c*t)", evaluator=_mcnally1971, domain_guard=_mcnally1971_guard,
              guesser=_mcnally1971_guess),
    ModelSpec(id="yang1989", groups=("population",), param_names=("a", "c", "d", "x"),
              formula="a*exp(-x*t) / (1 + exp(-c*(t - d)))", evaluator=_yang1989, guesser=_yang1989_guess),
    ModelSpec(id="exp_sin", groups=("temperature",), param_names=("f", "a0", "a1", "a2", "b1"),
              formula="(a0 + b1*sin(a1*t - a2))*exp(f*t)", evaluator=_exp_sin, guesser=_exp_sin_guess),
    ModelSpec(id="fourier2", groups=("temperature",), param_names=("a0", "a1", "b1", "a2", "b2", "w"),
              formula="a0 + a1*cos(w*t) + b1*sin(w*t) + a2*cos(2*w*t) + b2*sin(2*w*t)",
              evaluator=_fourier2, guesser=_fourier2_guess),
    ModelSpec(id="gauss2", groups=("temperature", "price"), param_names=("a1", "b1", "c1", "a2", "b2", "c2"),
              formula="a1*exp(-((t - b1)/c1)^2) + a2*exp(-((t - b2)/c2)^2)", evaluator=_gauss2,
              domain_guard=_gauss2_guard, guesser=_gauss2_guess),
    ModelSpec(id="exp2", groups=("temperature", "price"), param_names=("a", "b", "c", "d"),
              formula="a*exp(b*t) + c*exp(d*t)", evaluator=_exp2, guesser=_exp2_guess),
    ModelSpec(id="sin3", groups=("temperature", "price"),
              param_names=("a1", "b1", "c1", "a2", "b2", "c2", "a3", "b3", "c3"),
              formula="a1*sin(b1*t + c1) + a2*sin(b2*t + c2) + a3*sin(b3*t + c3)", evaluator=_sin3,
              guesser=_sin3_guess),
    ModelSpec(id="distr_exp", groups=("price",), param_names=("A", "B", "C", "F", "G"),
              formula="(A*t^2 + B*t + C)^(F*t^G)", evaluator=_distr_exp, domain_guard=_distr_exp_guard,
              guesser=_distr_exp_guess, literal_rendering=True),
    ModelSpec(id="rat21", groups=("price",), param_names=("p1", "p2", "p3", "q1"),
              formula="(p1*t^2 + p2*t + p3) / (t + q1)", evaluator=_rat21, domain_guard=_rat21_guard,
              guesser=_rat21_guess),
    ModelSpec(id="malthusian", groups=("empirical",), param_names=("p0", "k"),
              formula="p0*exp(k*t)", evaluator=_malthusian, guesser=_malthusian_guess),
    ModelSpec(id="logistic", groups=("empirical",), param_names=("p0", "p1", "A"),
              formula="p0*p1 / (p0 + (p1 - p0)*exp(-A*p1*t))", evaluator=_logistic,
              domain_guard=_logistic_guard, guard_error=PoleError, guesser=_logistic_guess),
]


class ModelRegistry:
    """Holds the model families and evaluates them."""

    def __init__(self, specs: Iterable[ModelSpec]):
        self._specs: Dict[str, ModelSpec] = {}
        for spec in specs:
            if spec.id in self._specs:
                raise ValueError(f"duplicate model id {spec.id}")
            self._specs[spec.id] = spec

    def catalog(self) -> List[ModelSpec]:
        """The distinct published families in table order, shared ones listed once."""
        return [spec for spec in self._specs.values() if "empirical" not in spec.groups]

    def all_models(self) -> List[ModelSpec]:
        """Every fittable family, including the empirical ODE solutions."""
        return list(self._specs.values())

    def literal_models(self) -> List[str]:
        return [spec.id for spec in self._specs.values() if spec.literal_rendering]

    def get(self, model_id: str) -> ModelSpec:
        """Look up a model family by id.

        Raises:
            UnknownModel: If the id is not registered
        """
        try:
            return self._specs[model_id]
        except KeyError:
            raise UnknownModel(f"unknown model {model_id!r}; known: {', '.join(self._specs)}") from None

    def param_array(self, spec: ModelSpec, params: Mapping[str, float]) -> np.ndarray:
        """Parameter values in the spec's order, checked for completeness and finiteness."""
        missing = [name for name in spec.param_names if name not in params]
        unexpected = [name for name in params if name not in spec.param_names]
        if missing or unexpected:
            raise IncompleteParams(f"{spec.id}: missing {missing}, unexpected {unexpected}")

        values = np.array([float(params[name]) for name in spec.param_names])
        if not np.all(np.isfinite(values)):
            raise NonFinite(f"{spec.id}: parameters must be finite, got {dict(params)}")
        return values

    def evaluate_array(self, spec: ModelSpec, values: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Evaluate with parameters already ordered as spec.param_names.

        Raises:
            DomainError: At the first time where the guard fails or the value is not finite
        """
        p = dict(zip(spec.param_names, (float(v) for v in values)))
        with np.errstate(all="ignore"):
            if spec.domain_guard is not None:
                outside = np.flatnonzero(~spec.domain_guard(p, t))
                if outside.size:
                    i = int(outside[0])
                    raise spec.guard_error(f"{spec.id} is undefined", index=i, t=float(t[i]))
            y = np.asarray(spec.evaluator(p, t), dtype=float)

        overflow = np.flatnonzero(~np.isfinite(y))
        if overflow.size:
            i = int(overflow[0])
            raise DomainError(f"{spec.id} is not finite", index=i, t=float(t[i]))
        return y

    def evaluate(self, model_id: str, params: Mapping[str, float], t: float) -> float:
        return float(self.evaluate_series(model_id, params, [t])[0])

    def evaluate_series(self, model_id: str, params: Mapping[str, float], times: Sequence[float]) -> np.ndarray:
        """Evaluate a model at each time; element i equals evaluate(model_id, params, times[i])."""
        spec = self.get(model_id)
        return self.evaluate_array(spec, self.param_array(spec, params), np.asarray(times, dtype=float))

    def initial_guess(self, model_id: str, series: TimeSeries) -> ParamVector:
        """Deterministic starting values derived from the series.

        Raises:
            TooFewPoints: If the series has fewer points than the model has parameters
        """
        spec = self.get(model_id)
        if series.n < spec.k:
            raise TooFewPoints(f"{model_id} has {spec.k} parameters but the series has {series.n} points")

        with np.errstate(all="ignore"):
            guess = {name: float(value) for name, value in spec.guesser(series).items()}
        for name, value in guess.items():
            if not math.isfinite(value):
                logger.debug(f"Initial guess for {model_id}.{name} was {value}; using 0")
                guess[name] = 0.0
        return guess


# Global registry instance
registry = ModelRegistry(_SPECS)
