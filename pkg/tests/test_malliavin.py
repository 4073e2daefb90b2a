"""Unit tests for :mod:`malliavin` — weighted gradient estimators."""

import math
from pathlib import Path

import numpy as np
import pytest

from fbmlab.ensemble import SimulationSettings
from fbmlab.errors import ConfigurationError, DomainError, HypothesisError
from fbmlab.grid import TimeGrid
from fbmlab.malliavin import (
    NORMALIZATION_TOLERANCE,
    ControlFunction,
    WeightedEstimate,
    bismut_gradient,
    bismut_weights,
    entropy_gradient_bound_check,
    estimate_PTf,
    finite_difference_gradient,
    ibp_shift_gradient,
    oracle_triangle,
    pathwise_gradient,
    require_normalized,
    weight_centering,
)
from fbmlab.models import linear_model, parse_test_function, trig_model, zero_model
from fbmlab.report import Verdict


def _settings(**overrides) -> SimulationSettings:
    values = dict(H=0.7, T=1.0, n=64, paths=20_000, seed=2024, batch_size=4096)
    values.update(overrides)
    return SimulationSettings(**values)


def _within(estimate: WeightedEstimate, expected: float, slack: float = 0.0) -> bool:
    return abs(estimate.value - expected) <= 4.0 * estimate.std_error + slack


def _control_table(path: Path, value: float) -> Path:
    path.write_text(f"t,uprime\n0,{value}\n1,{value}\n")
    return path


class TestEstimatePTf:
    """Plain expectations of f(X_T)."""

    def test_constant_function_is_exact(self) -> None:
        estimate = estimate_PTf(linear_model(0.5), 0.2, parse_test_function("const:2"), _settings(paths=500))
        assert estimate.value == pytest.approx(2.0)
        assert estimate.std_error == pytest.approx(0.0, abs=1e-15)

    def test_mean_of_zero_drift_solution(self) -> None:
        estimate = estimate_PTf(zero_model(), 0.4, parse_test_function("id"), _settings())
        assert _within(estimate, 0.4)

    def test_second_moment_of_zero_drift_solution(self) -> None:
        settings = _settings()
        estimate = estimate_PTf(zero_model(), 0.3, parse_test_function("square"), settings)
        assert _within(estimate, 0.09 + settings.T ** (2.0 * settings.H))

    def test_thread_count_does_not_change_result(self) -> None:
        f = parse_test_function("sin")
        single = estimate_PTf(linear_model(0.5), 0.0, f, _settings(paths=4000, batch_size=500, threads=1))
        pooled = estimate_PTf(linear_model(0.5), 0.0, f, _settings(paths=4000, batch_size=500, threads=4))
        assert single.value == pooled.value
        assert single.std_error == pooled.std_error


class TestControlFunction:
    """Controls of the Bismut weight."""

    @pytest.mark.parametrize("H", [0.3, 0.5, 0.7])
    def test_default_control_is_normalised(self, H: float) -> None:
        control = ControlFunction.default(H, 1.0)
        assert abs(control.normalization(TimeGrid(1.0, 128), H)) <= NORMALIZATION_TOLERANCE

    @pytest.mark.parametrize("H", [0.6, 0.75, 0.9])
    def test_default_control_is_normalised_on_coarse_grid(self, H: float) -> None:
        grid = TimeGrid(1.0, 64)
        control = ControlFunction.default(H, 1.0)
        require_normalized(control, grid, H)
        assert abs(control.normalization(grid, H)) <= 2e-4

    def test_bismut_gradient_at_large_H(self) -> None:
        estimate = bismut_gradient(zero_model(), 0.0, 1.0, parse_test_function("id"), _settings(H=0.75))
        assert _within(estimate, 1.0)

    def test_table_control(self, tmp_path: Path) -> None:
        control = ControlFunction.parse(f"table:{_control_table(tmp_path / 'u.csv', -1.0)}", 0.5, 1.0)
        assert not control.is_power_law
        assert control.normalization(TimeGrid(1.0, 16), 0.5) == pytest.approx(0.0, abs=1e-12)

    def test_unnormalised_control_is_rejected(self, tmp_path: Path) -> None:
        control = ControlFunction.from_table(_control_table(tmp_path / "u.csv", 0.0))
        with pytest.raises(ConfigurationError, match="violates"):
            bismut_gradient(zero_model(), 0.0, 1.0, parse_test_function("id"), _settings(H=0.5, n=16, paths=100), control)

    def test_unknown_control_raises(self) -> None:
        with pytest.raises(ConfigurationError, match="Unknown control"):
            ControlFunction.parse("optimal", 0.7, 1.0)


class TestBismutWeight:
    """Bismut-type representation of the gradient."""

    def test_brownian_identity_gradient(self) -> None:
        estimate = bismut_gradient(zero_model(), 0.0, 1.0, parse_test_function("id"), _settings(H=0.5))
        assert _within(estimate, 1.0)

    def test_weight_is_linear_in_direction(self) -> None:
        settings = _settings(paths=500)
        _, once = bismut_weights(linear_model(0.5), 0.0, 1.0, settings)
        _, twice = bismut_weights(linear_model(0.5), 0.0, 2.0, settings)
        assert np.array_equal(twice, 2.0 * once)

    def test_zero_direction_gives_zero(self) -> None:
        estimate = bismut_gradient(linear_model(0.5), 0.0, 0.0, parse_test_function("sin"), _settings(paths=500))
        assert estimate.value == 0.0

    def test_weight_is_centred(self) -> None:
        assert _within(weight_centering(linear_model(0.5), 0.0, 1.0, _settings()), 0.0)

    def test_constant_function_has_zero_gradient(self) -> None:
        estimate = bismut_gradient(linear_model(-1.0), 0.3, 1.0, parse_test_function("const:1"), _settings())
        assert _within(estimate, 0.0)

    def test_multiplicative_noise_is_rejected(self) -> None:
        with pytest.raises(HypothesisError, match="additive"):
            bismut_gradient(trig_model(), 0.0, 1.0, parse_test_function("sin"), _settings(paths=100))


class TestIntegrationByParts:
    """Shift weight for P_T(grad f)."""

    def test_gaussian_closed_form(self) -> None:
        settings = _settings()
        variance = settings.T ** (2.0 * settings.H)
        estimate = ibp_shift_gradient(zero_model(), 0.3, 1.0, parse_test_function("sin"), settings)
        assert abs(estimate.value - math.cos(0.3) * math.exp(-0.5 * variance)) <= 3.0 * estimate.std_error + 2e-3

    def test_zero_direction_is_exact(self) -> None:
        estimate = ibp_shift_gradient(linear_model(0.5), 0.0, 0.0, parse_test_function("sin"), _settings(paths=500))
        assert estimate.value == 0.0
        assert estimate.std_error == 0.0

    def test_agrees_with_pathwise_derivative_of_test_function(self) -> None:
        settings = _settings()
        f = parse_test_function("sin")
        shifted = ibp_shift_gradient(linear_model(0.5), 0.0, 1.0, f, settings)
        direct = estimate_PTf(linear_model(0.5), 0.0, parse_test_function("cos"), settings)
        assert shifted.agrees_with(direct, 4.0)


class TestOracleTriangle:
    """Three gradient estimators on common paths."""

    def test_estimators_agree(self) -> None:
        triangle = oracle_triangle(linear_model(0.5), 0.0, 1.0, parse_test_function("sin"), _settings())
        assert triangle.all_agree(4.0)
        assert set(triangle.agreement()) == {
            "bismut~pathwise",
            "bismut~finite_difference",
            "pathwise~finite_difference",
        }

    def test_pathwise_needs_derivative(self) -> None:
        with pytest.raises(DomainError, match="no derivative"):
            pathwise_gradient(zero_model(), 0.0, 1.0, parse_test_function("step:0"), _settings(paths=100))

    def test_finite_difference_step_must_be_positive(self) -> None:
        with pytest.raises(DomainError, match="positive"):
            finite_difference_gradient(zero_model(), 0.0, 1.0, parse_test_function("sin"), _settings(paths=100), eps=0.0)

    def test_finite_difference_of_linear_model_is_deterministic(self) -> None:
        settings = _settings(H=0.5, n=16, paths=200)
        estimate = finite_difference_gradient(linear_model(0.5), 0.0, 1.0, parse_test_function("id"), settings)
        assert estimate.value == pytest.approx((1.0 + 0.5 / 16) ** 16, rel=1e-9)


class TestEntropyGradientBound:
    """Gradient bounded by entropy for positive test functions."""

    @pytest.mark.parametrize("variant", ["shift", "bismut"])
    def test_bound_holds(self, variant: str) -> None:
        report = entropy_gradient_bound_check(
            linear_model(0.5), 0.0, 1.0, parse_test_function("two-plus-sin"), 1.0, _settings(), variant=variant
        )
        assert report.verdict is Verdict.PASS
        assert report.details["entropy"] >= 0.0

    def test_non_positive_function_raises(self) -> None:
        with pytest.raises(DomainError, match="strictly positive"):
            entropy_gradient_bound_check(
                linear_model(0.5), 0.0, 1.0, parse_test_function("sin"), 1.0, _settings(paths=100)
            )

    def test_non_positive_alpha_raises(self) -> None:
        with pytest.raises(DomainError, match="alpha"):
            entropy_gradient_bound_check(
                linear_model(0.5), 0.0, 1.0, parse_test_function("gauss-bump"), 0.0, _settings(paths=100)
            )
