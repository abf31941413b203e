"""Tests for the model registry."""

import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

import math

import numpy as np
import pytest

from src.data import build_series
from src.errors import DomainError, IncompleteParams, NonFinite, PoleError, TooFewPoints, UnknownModel
from src.registry import registry
from src.scenarios import generate, load_preset

TABLE4 = {
    "mcmillan1980": {"A": 88.42, "k1": 1.689, "k2": -0.01136},
    "mcnally1971": {"a": 65.4, "b": 0.1047, "c": -0.009579},
    "yang1989": {"a": 87.99, "c": 98.0, "d": -934.0, "x": -0.01141},
}

SIN3_TABLE6 = {
    "a1": 38.29, "b1": 0.001099, "c1": 1.039,
    "a2": 3.117, "b2": 0.3428, "c2": -0.4052,
    "a3": 1.508, "b3": 0.7265, "c3": 1.175,
}

GAUSS2 = {"a1": 35.94, "b1": 5.404, "c1": 16.7, "a2": 22.41, "b2": 22.87, "c2": 6.083}


class TestCatalog:
    """Test registry contents."""

    def test_catalog_lists_distinct_families(self):
        """Test the published families in stable order, shared ones once."""
        ids = [spec.id for spec in registry.catalog()]
        assert ids == [
            "nelder1961", "mcmillan1980", "mcmillan1970", "mcnally1971", "yang1989",
            "exp_sin", "fourier2", "gauss2", "exp2", "sin3",
            "distr_exp", "rat21",
        ]
        assert len(set(ids)) == 12

    def test_all_models_adds_empirical_solutions(self):
        """Test malthusian and logistic are fittable too."""
        ids = [spec.id for spec in registry.all_models()]
        assert len(ids) == 14
        assert ids[-2:] == ["malthusian", "logistic"]

    def test_parameter_counts(self):
        """Test k for a few families."""
        assert registry.get("yang1989").k == 4
        assert registry.get("sin3").k == 9
        assert registry.get("fourier2").k == 6
        assert registry.get("distr_exp").k == 5

    def test_unknown_model(self):
        """Test lookup failure."""
        with pytest.raises(UnknownModel):
            registry.get("nosuchmodel")

    def test_literal_models_flagged(self):
        """Test the literally rendered formulas are flagged."""
        assert registry.literal_models() == ["nelder1961", "mcmillan1970", "distr_exp"]


class TestEvaluate:
    """Test formula evaluation."""

    def test_mcmillan1980_vanishes_at_zero(self):
        """Test e^0 - e^0 = 0 for any parameters."""
        assert registry.evaluate("mcmillan1980", TABLE4["mcmillan1980"], 0.0) == 0.0
        assert registry.evaluate("mcmillan1980", {"A": -3.0, "k1": 0.2, "k2": 7.0}, 0.0) == 0.0

    def test_mcmillan1980_table_constants(self):
        """Test the fitted curve at t=100."""
        assert abs(registry.evaluate("mcmillan1980", TABLE4["mcmillan1980"], 100.0) - 275.4) < 0.1

    def test_yang1989_table_constants(self):
        """Test the fitted curve at t=100."""
        assert abs(registry.evaluate("yang1989", TABLE4["yang1989"], 100.0) - 275.4) < 0.1

    def test_mcnally1971_table_constants(self):
        """Test the fitted curve at t=100."""
        values = registry.evaluate_series("mcnally1971", TABLE4["mcnally1971"], [100.0])
        assert values.shape == (1,)
        assert abs(values[0] - 276.0) < 0.1

    def test_sin3_table_constants(self):
        """Test a1 sin c1 + a2 sin c2 + a3 sin c3."""
        assert abs(registry.evaluate("sin3", SIN3_TABLE6, 0.0) - 33.17) < 0.01

    def test_empty_times(self):
        """Test the empty map."""
        assert registry.evaluate_series("exp2", {"a": 1, "b": 1, "c": 1, "d": 1}, []).size == 0

    def test_series_matches_pointwise(self):
        """Test evaluate_series against evaluate."""
        times = np.random.default_rng(3).uniform(0, 24, size=20)
        series = registry.evaluate_series("gauss2", GAUSS2, times)
        for t, y in zip(times, series):
            assert registry.evaluate("gauss2", GAUSS2, t) == pytest.approx(y, rel=1e-14)

    def test_missing_parameter(self):
        """Test incomplete parameter vectors."""
        with pytest.raises(IncompleteParams):
            registry.evaluate("exp2", {"a": 1, "b": 1, "c": 1}, 0.0)

    def test_unexpected_parameter(self):
        """Test extra parameter names."""
        with pytest.raises(IncompleteParams):
            registry.evaluate("exp2", {"a": 1, "b": 1, "c": 1, "d": 1, "e": 1}, 0.0)

    def test_non_finite_parameter(self):
        """Test non-finite parameter values."""
        with pytest.raises(NonFinite):
            registry.evaluate("exp2", {"a": math.nan, "b": 1, "c": 1, "d": 1}, 0.0)

    def test_distr_exp_negative_base(self):
        """Test the base > 0 guard reports the offending index."""
        params = {"A": 0.0, "B": -1.0, "C": 2.0, "F": 1.0, "G": 1.0}
        with pytest.raises(DomainError) as e:
            registry.evaluate_series("distr_exp", params, [0.0, 1.0, 2.0, 3.0])
        assert e.value.index == 2
        assert e.value.t == 2.0

    def test_distr_exp_negative_time(self):
        """Test the t >= 0 guard."""
        with pytest.raises(DomainError):
            registry.evaluate("distr_exp", {"A": 0.0, "B": 0.0, "C": 2.0, "F": 1.0, "G": 1.0}, -1.0)

    def test_mcnally_zero_time(self):
        """Test the 0^b = 0 convention for b > 0 and the guard for b <= 0."""
        assert registry.evaluate("mcnally1971", TABLE4["mcnally1971"], 0.0) == 0.0
        with pytest.raises(DomainError):
            registry.evaluate("mcnally1971", {"a": 1.0, "b": 0.0, "c": 0.0}, 0.0)
        with pytest.raises(DomainError):
            registry.evaluate("mcnally1971", TABLE4["mcnally1971"], -1.0)

    def test_rat21_pole(self):
        """Test t + q1 != 0."""
        with pytest.raises(DomainError):
            registry.evaluate("rat21", {"p1": 1, "p2": 1, "p3": 1, "q1": -5}, 5.0)

    def test_rat21_table_constants(self):
        """Test the quadratic-numerator reading gives a plausible price."""
        params = {"p1": 4.821e04, "p2": -9.299e05, "p3": 1.074e07, "q1": 1.805e05}
        assert abs(registry.evaluate("rat21", params, 10.0) - 34.7) < 0.1

    def test_logistic_pole(self):
        """Test the logistic family raises PoleError at its denominator root."""
        p0, p1, A = 76.09, -29210.0, -4.382e-07
        pole = -math.log(-p0 / (p1 - p0)) / (A * p1)
        with pytest.raises(PoleError):
            registry.evaluate("logistic", {"p0": p0, "p1": p1, "A": A}, pole)

    def test_overflow_is_domain_error(self):
        """Test non-finite results are reported."""
        with pytest.raises(DomainError):
            registry.evaluate("exp2", {"a": 1, "b": 1000, "c": 0, "d": 0}, 10.0)


class TestSymmetries:
    """Test structural properties of the families."""

    def test_sin3_term_permutation(self):
        """Test that permuting sine terms leaves the curve unchanged."""
        permuted = {
            "a1": SIN3_TABLE6["a3"], "b1": SIN3_TABLE6["b3"], "c1": SIN3_TABLE6["c3"],
            "a2": SIN3_TABLE6["a1"], "b2": SIN3_TABLE6["b1"], "c2": SIN3_TABLE6["c1"],
            "a3": SIN3_TABLE6["a2"], "b3": SIN3_TABLE6["b2"], "c3": SIN3_TABLE6["c2"],
        }
        times = np.linspace(0, 24, 25)
        original = registry.evaluate_series("sin3", SIN3_TABLE6, times)
        assert np.allclose(registry.evaluate_series("sin3", permuted, times), original, rtol=1e-12, atol=1e-12)

    def test_gauss2_term_swap(self):
        """Test that swapping Gaussian terms leaves the curve unchanged."""
        swapped = {"a1": GAUSS2["a2"], "b1": GAUSS2["b2"], "c1": GAUSS2["c2"],
                   "a2": GAUSS2["a1"], "b2": GAUSS2["b1"], "c2": GAUSS2["c1"]}
        times = np.linspace(0, 24, 25)
        assert np.allclose(registry.evaluate_series("gauss2", swapped, times),
                           registry.evaluate_series("gauss2", GAUSS2, times), rtol=1e-12)

    def test_nelder_depends_on_rate_product(self):
        """Test (k, lambda) -> (2k, lambda/2) invariance."""
        params = {"A": 2.0, "k": 0.3, "lambda": 1.7, "theta": 0.9}
        scaled = dict(params, k=0.6, **{"lambda": 0.85})
        times = np.linspace(0, 10, 11)
        assert np.allclose(registry.evaluate_series("nelder1961", scaled, times),
                           registry.evaluate_series("nelder1961", params, times), rtol=1e-14)

    def test_continuity(self):
        """Test small steps give small changes away from guard boundaries."""
        for t in (1.0, 5.0, 12.0):
            y = registry.evaluate("gauss2", GAUSS2, t)
            assert abs(registry.evaluate("gauss2", GAUSS2, t + 1e-9) - y) < 1e-6


class TestInitialGuess:
    """Test starting-value heuristics."""

    def test_growth_rate(self):
        """Test k = ln(y_n / y_1) / (t_n - t_1)."""
        guess = registry.initial_guess("malthusian", build_series([0, 100], [76.09, 275.4]))
        assert abs(guess["k"] - 0.012863) < 1e-6
        assert abs(guess["p0"] - 76.09) < 1e-12

    def test_constant_series(self):
        """Test amplitudes vanish and the offset is the mean."""
        s = build_series(range(10), [4.0] * 10)
        fourier = registry.initial_guess("fourier2", s)
        assert fourier["a0"] == 4.0
        assert fourier["a1"] == 0.0 and fourier["b1"] == 0.0
        sines = registry.initial_guess("sin3", s)
        assert sines["a1"] == sines["a2"] == sines["a3"] == 0.0

    def test_too_few_points(self):
        """Test n < k."""
        with pytest.raises(TooFewPoints):
            registry.initial_guess("sin3", build_series([0, 1, 2], [1, 2, 3]))

    def test_guesses_are_domain_valid(self):
        """Test every family's guess evaluates on logistic population data."""
        cfg = load_preset("logistic", "eq7")
        s = generate("logistic", cfg, np.arange(124.0))
        for spec in registry.all_models():
            guess = registry.initial_guess(spec.id, s)
            assert set(guess) == set(spec.param_names)
            values = registry.evaluate_series(spec.id, guess, s.times)
            assert np.all(np.isfinite(values)), spec.id

    def test_logistic_guess_follows_curvature(self):
        """Test convex log-growth gives a negative carrying level."""
        cfg = load_preset("logistic", "eq7")
        guess = registry.initial_guess("logistic", generate("logistic", cfg, np.arange(124.0)))
        assert guess["p1"] < 0
        assert guess["p1"] == pytest.approx(cfg.p1, rel=1e-2)
        assert guess["p0"] == pytest.approx(76.09, rel=1e-12)

    def test_logistic_guess_saturating(self):
        """Test concave log-growth gives a positive carrying level."""
        t = np.linspace(0, 50, 51)
        y = registry.evaluate_series("logistic", {"p0": 10.0, "p1": 100.0, "A": 0.001}, t)
        guess = registry.initial_guess("logistic", build_series(t, y))
        assert guess["p1"] == pytest.approx(100.0, rel=0.05)
        assert guess["A"] > 0

    def test_logistic_guess_without_log(self):
        """Test non-positive data falls back to twice the peak."""
        guess = registry.initial_guess("logistic", build_series(range(4), [-1.0, 2.0, 3.0, 5.0]))
        assert guess["p1"] == 10.0
