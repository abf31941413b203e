"""Tests for the scenario closed forms, presets and RK4 oracle."""

import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

import math

import numpy as np
import pytest

from src.errors import DataError, DegenerateConfig, PoleError, UsageError
from src.models import BuildingConfig, MarketConfig, NoiseConfig, PopulationConfig
from src.scenarios import (
    PRESET_NAMES,
    building_temperature,
    config_from_json,
    config_to_json,
    equilibrium_price,
    generate,
    integrate_rk4,
    load_preset,
    logistic,
    malthusian,
    market_price_expectations,
    market_price_linear,
    market_quantities,
    verify_closed_form,
)

EQ7 = PopulationConfig(p0=76.09, k=0.00065528, p1=-29210.0, A=-4.382e-07)
EQ18 = BuildingConfig(K=1.11, K_U=-0.898, T_D=76.41, H0=86.61, M0=-9.56, B=-1.04, T0=32.09)
EQ22 = MarketConfig(d0=30, d1=2, d2=4, s0=20, s1=1, s2=6, lam=1.0, p_init=5.0)


class TestPopulation:
    """Test the Malthusian and logistic solutions."""

    def test_malthusian_initial_value(self):
        """Test p(0) = p0."""
        assert malthusian(EQ7, 0.0) == 76.09

    def test_malthusian_printed_rate(self):
        """Test the printed rate at t=100."""
        assert abs(malthusian(EQ7, 100.0) - 81.24) < 0.01

    def test_malthusian_semigroup(self):
        """Test p(t + s) = p(t) e^{ks}."""
        rng = np.random.default_rng(11)
        for t, s in rng.uniform(0, 100, size=(5, 2)):
            assert malthusian(EQ7, t + s) == pytest.approx(malthusian(EQ7, t) * math.exp(EQ7.k * s), rel=1e-12)

    def test_logistic_initial_value(self):
        """Test p(0) = p0."""
        assert logistic(EQ7, 0.0) == pytest.approx(76.09, rel=1e-12)

    def test_logistic_midway(self):
        """Test the logistic curve at t=50."""
        assert abs(logistic(EQ7, 50.0) - 144.6) < 0.1

    def test_logistic_pole(self):
        """Test the denominator root near t=465."""
        pole = -math.log(-EQ7.p0 / (EQ7.p1 - EQ7.p0)) / (EQ7.A * EQ7.p1)
        assert 464 < pole < 466
        with pytest.raises(PoleError) as e:
            logistic(EQ7, pole)
        assert e.value.index == 0

    def test_population_requires_positive_p0(self):
        """Test p0 > 0."""
        with pytest.raises(ValueError):
            PopulationConfig(p0=0.0, k=0.01, p1=1.0, A=1.0)


class TestBuildingTemperature:
    """Test the single-compartment building solution."""

    def test_initial_temperature(self):
        """Test T(0) = T0."""
        assert building_temperature(EQ18, 0.0) == pytest.approx(32.09, abs=1e-12)

    def test_derived_constants(self):
        """Test B2 and B1."""
        assert abs(EQ18.B2 - 34.82) < 0.01
        assert abs(EQ18.B1 - (-5.445)) < 0.001
        assert EQ18.omega == math.pi / 12

    def test_noon(self):
        """Test the temperature at t=12."""
        assert abs(building_temperature(EQ18, 12.0) - 32.28) < 0.005

    def test_degenerate_building(self):
        """Test K + K_U = 0."""
        cfg = EQ18.model_copy(update={"K_U": -1.11})
        with pytest.raises(DegenerateConfig):
            building_temperature(cfg, 1.0)

    def test_constant_outside_converges_monotonically(self):
        """Test relaxation toward B2 with no outside swing."""
        cfg = EQ18.model_copy(update={"B": 0.0})
        values = [building_temperature(cfg, t) for t in np.linspace(0, 48, 97)]
        steps = np.diff(values)
        assert np.all(steps >= 0) or np.all(steps <= 0)
        assert abs(values[-1] - cfg.B2) < abs(values[0] - cfg.B2)


class TestMarket:
    """Test the demand/supply price models."""

    def test_equilibrium_price(self):
        """Test p_hat = (d0 + s0) / (d1 + s1)."""
        assert equilibrium_price(30, 2, 20, 1) == pytest.approx(50 / 3)
        assert equilibrium_price(0, 2, 0, 1) == 0.0
        with pytest.raises(DegenerateConfig):
            equilibrium_price(1, 1, 1, -1)

    def test_quantities(self):
        """Test the worked demand/supply pair."""
        assert market_quantities(EQ22, 5.0, 0.0) == (20.0, -15.0)

    def test_quantities_strict_signs(self):
        """Test the all-negative supply variant."""
        strict = EQ22.model_copy(update={"strict_eq21_signs": True})
        assert market_quantities(strict, 5.0, 0.0) == (20.0, -25.0)

    def test_zero_coefficients(self):
        """Test an all-zero market."""
        cfg = MarketConfig(d0=0, d1=0, s0=0, s1=0, lam=1.0, p_init=0.0)
        assert market_quantities(cfg, 3.0, 1.0) == (0.0, 0.0)

    def test_no_excess_demand_at_equilibrium(self):
        """Test q_d - q_s vanishes at p_hat."""
        p_hat = equilibrium_price(EQ22.d0, EQ22.d1, EQ22.s0, EQ22.s1)
        q_d, q_s = market_quantities(EQ22, p_hat, 0.0)
        assert abs(q_d - q_s) < 1e-12

    def test_linear_price(self):
        """Test the relaxation toward equilibrium."""
        assert market_price_linear(EQ22, 0.0) == pytest.approx(5.0, abs=1e-12)
        assert abs(market_price_linear(EQ22, 1.0) - 16.09) < 0.01
        assert market_price_linear(EQ22, 50.0) == pytest.approx(50 / 3, rel=1e-12)

    def test_linear_price_monotone(self):
        """Test no overshoot of the first-order relaxation."""
        values = [market_price_linear(EQ22, t) for t in np.linspace(0, 10, 101)]
        assert np.all(np.diff(values) >= 0)
        assert max(values) <= 50 / 3 + 1e-12

    def test_expectations_unit_constants(self):
        """Test P(t) = e^t for hand-picked constants."""
        cfg = MarketConfig(d0=0, d1=1, d2=2, s0=0, s1=0, s2=0, lam=1.0, D=1.0)
        assert market_price_expectations(cfg, 0.0) == 1.0
        assert market_price_expectations(cfg, 1.0) == pytest.approx(math.e, rel=1e-12)

    def test_expectations_printed_constants(self):
        """Test the printed constants at t=0."""
        cfg = load_preset("price_expectations", "eq24")
        assert abs(market_price_expectations(cfg, 0.0) - (-3607.0)) < 0.1

    def test_expectations_degenerate(self):
        """Test c lambda - 1 = 0."""
        cfg = MarketConfig(d0=0, d1=1, d2=1, s0=0, s1=0, s2=0, lam=1.0, D=1.0)
        with pytest.raises(DegenerateConfig):
            market_price_expectations(cfg, 1.0)

    def test_market_needs_initial_state(self):
        """Test that p_init or D is required."""
        with pytest.raises(UsageError):
            MarketConfig(d0=1, d1=1, s0=1, s1=1, lam=1.0)


class TestGenerate:
    """Test synthetic series generation."""

    def test_noiseless_logistic(self):
        """Test y(0) = 76.09 and exact closed-form values."""
        times = np.arange(124.0)
        s = generate("logistic", EQ7, times)
        assert s.n == 124
        assert s.values[0] == pytest.approx(76.09, rel=1e-12)
        assert s.values[50] == pytest.approx(logistic(EQ7, 50.0), rel=1e-14)

    def test_noiseless_is_deterministic(self):
        """Test sd=0 reruns."""
        times = np.arange(24.0)
        assert generate("temperature", EQ18, times) == generate("temperature", EQ18, times)

    def test_seeded_noise(self):
        """Test seeded reproducibility and seed sensitivity."""
        times = np.arange(24.0)
        first = generate("temperature", EQ18, times, NoiseConfig(sd=1.0, seed=5))
        again = generate("temperature", EQ18, times, NoiseConfig(sd=1.0, seed=5))
        other = generate("temperature", EQ18, times, NoiseConfig(sd=1.0, seed=6))
        assert first == again
        assert first.values != other.values

    def test_generate_across_pole(self):
        """Test the pole surfaces with its time."""
        pole = -math.log(-EQ7.p0 / (EQ7.p1 - EQ7.p0)) / (EQ7.A * EQ7.p1)
        with pytest.raises(PoleError):
            generate("logistic", EQ7, np.append(np.arange(0.0, 400.0), pole))

    def test_wrong_config_type(self):
        """Test scenario/config mismatch."""
        with pytest.raises(UsageError):
            generate("temperature", EQ7, [0.0, 1.0])

    def test_unknown_scenario(self):
        """Test scenario lookup."""
        with pytest.raises(UsageError):
            generate("weather", EQ7, [0.0, 1.0])


class TestPresets:
    """Test shipped presets and JSON configs."""

    @pytest.mark.parametrize("name,scenario", [
        ("eq4", "malthusian"),
        ("eq4_calibrated", "malthusian"),
        ("eq7", "logistic"),
        ("eq18", "temperature"),
        ("eq22", "price_linear"),
        ("eq24", "price_expectations"),
    ])
    def test_presets_load(self, name, scenario):
        """Test every preset loads for its scenario."""
        assert name in PRESET_NAMES
        cfg = load_preset(scenario, name)
        assert config_from_json(scenario, config_to_json(cfg)) == cfg

    def test_calibrated_rate(self):
        """Test the year-2000 calibration."""
        cfg = load_preset("malthusian", "eq4_calibrated")
        assert abs(malthusian(cfg, 100.0) - 282.0) < 0.5

    def test_preset_matches_constants(self):
        """Test the temperature preset."""
        assert load_preset("temperature", "eq18") == EQ18

    def test_market_json_uses_lambda(self):
        """Test the lambda field name on the wire."""
        assert b'"lambda"' in config_to_json(EQ22)

    def test_preset_for_wrong_scenario(self):
        """Test a preset that does not fit the scenario."""
        with pytest.raises(DataError):
            load_preset("temperature", "eq7")

    def test_missing_preset_file(self, tmp_path):
        """Test an unreadable preset path."""
        with pytest.raises(DataError):
            load_preset("logistic", str(tmp_path / "missing.json"))

    def test_custom_preset_file(self, tmp_path):
        """Test a preset from a JSON file."""
        path = tmp_path / "pop.json"
        path.write_text('{"p0": 10, "k": 0.1, "p1": 100, "A": 0.001}')
        cfg = load_preset("malthusian", str(path))
        assert malthusian(cfg, 0.0) == 10.0

    def test_invalid_json(self):
        """Test malformed documents."""
        with pytest.raises(DataError):
            config_from_json("logistic", b"{not json")


class TestOracle:
    """Test closed forms against RK4 integration of their differential equations."""

    def test_rk4_exponential(self):
        """Test dy/dt = y."""
        values = integrate_rk4(lambda t, y: y, 1.0, [0.0, 0.5, 1.0], step=1e-3)
        assert values[0] == 1.0
        assert values[-1] == pytest.approx(math.e, rel=1e-12)

    def test_rk4_rejects_backwards_times(self):
        """Test sample ordering."""
        with pytest.raises(UsageError):
            integrate_rk4(lambda t, y: y, 1.0, [1.0, 0.5])

    def test_logistic_oracle(self):
        """Test the logistic solution over the population record."""
        deviation = verify_closed_form("logistic", EQ7, np.arange(0.0, 124.0, 1.0))
        assert deviation["max_rel"] < 1e-4

    def test_temperature_oracle(self):
        """Test the building solution over a day."""
        deviation = verify_closed_form("temperature", EQ18, np.linspace(0, 24, 49))
        assert deviation["max_abs"] < 1e-3

    def test_linear_price_oracle(self):
        """Test the linear price relaxation."""
        deviation = verify_closed_form("price_linear", EQ22, np.linspace(0, 10, 21))
        assert deviation["max_rel"] < 1e-4

    def test_expectations_oracle(self):
        """Test the expectations solution."""
        cfg = MarketConfig(d0=3, d1=1, d2=2, s0=1, s1=1, s2=1, lam=0.5, p_init=1.0)
        deviation = verify_closed_form("price_expectations", cfg, np.linspace(0, 5, 11))
        assert deviation["max_rel"] < 1e-4
