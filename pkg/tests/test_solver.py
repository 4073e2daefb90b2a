"""Unit tests for :mod:`solver` — Volterra Euler scheme and its variations."""

import numpy as np
import pytest

from fbmlab.ensemble import Batch, SimulationSettings
from fbmlab.errors import DomainError, PropagationError, UsageError
from fbmlab.grid import TimeGrid
from fbmlab.kernel import build_weights
from fbmlab.models import linear_model, parse_model, trig_model, zero_model
from fbmlab.noise import fbm_block, sample_wiener, wiener_block
from fbmlab.solver import (
    deterministic_volterra,
    euler_maruyama,
    initial_condition_lipschitz,
    second_moment_profile,
    solve_paths,
    solve_shifted,
    solve_variational,
    solve_volterra,
)


class TestSolvePaths:
    """Block solver."""

    def test_starts_at_initial_condition(self) -> None:
        grid = TimeGrid(1.0, 16)
        X = solve_paths(parse_model("linear:0.5"), 0.3, wiener_block(grid, 1, Batch(0, 4)), build_weights(grid, 0.7))
        assert X.shape == (17, 4)
        assert np.all(X[0] == 0.3)

    def test_zero_drift_is_shifted_fbm(self) -> None:
        grid = TimeGrid(1.0, 32)
        weights = build_weights(grid, 0.7)
        dW = wiener_block(grid, 2, Batch(0, 8))
        X = solve_paths(zero_model(), 1.5, dW, weights)
        np.testing.assert_allclose(X, 1.5 + fbm_block(weights, dW), atol=1e-13)

    @pytest.mark.parametrize("model", [linear_model(0.5), trig_model(1.0)], ids=["linear", "trig"])
    def test_brownian_case_matches_euler_maruyama(self, model) -> None:
        grid = TimeGrid(1.0, 64)
        dW = wiener_block(grid, 3, Batch(0, 16))
        volterra = solve_paths(model, 0.2, dW, build_weights(grid, 0.5))
        classical = euler_maruyama(model, 0.2, dW, grid)
        assert np.max(np.abs(volterra - classical)) <= 1e-12

    def test_wrong_increment_count_raises(self) -> None:
        grid = TimeGrid(1.0, 16)
        with pytest.raises(UsageError, match="increments"):
            solve_paths(zero_model(), 0.0, np.zeros((8, 2)), build_weights(grid, 0.7))

    def test_overflow_reports_step(self) -> None:
        grid = TimeGrid(1.0, 8)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(PropagationError, match="step 1") as excinfo:
                solve_paths(linear_model(1e308), 1e10, np.zeros((8, 1)), build_weights(grid, 0.7))
        assert excinfo.value.step == 1


class TestSinglePath:
    """Single-path wrappers."""

    def test_solve_volterra_matches_block(self) -> None:
        grid = TimeGrid(1.0, 16)
        weights = build_weights(grid, 0.3)
        model = parse_model("ou:1")
        path = solve_volterra(model, 0.5, sample_wiener(grid, 4, 0), weights)
        block = solve_paths(model, 0.5, wiener_block(grid, 4, Batch(0, 1)), weights)[:, 0]
        np.testing.assert_allclose(path.X, block, atol=1e-13)

    def test_grid_mismatch_raises(self) -> None:
        with pytest.raises(UsageError, match="grid mismatch"):
            solve_volterra(zero_model(), 0.0, sample_wiener(TimeGrid(1.0, 8), 0, 0), build_weights(TimeGrid(1.0, 16), 0.7))

    def test_deterministic_linear_solution(self) -> None:
        grid = TimeGrid(1.0, 32)
        m = deterministic_volterra(linear_model(0.8), 2.0, build_weights(grid, 0.5))
        expected = 2.0 * (1.0 + 0.8 * grid.dt) ** np.arange(33)
        np.testing.assert_allclose(m, expected, rtol=1e-12)

    def test_variational_solution_of_linear_model(self) -> None:
        grid = TimeGrid(1.0, 32)
        weights = build_weights(grid, 0.7)
        model = linear_model(-0.6)
        dW = sample_wiener(grid, 9, 0)
        base = solve_volterra(model, 0.1, dW, weights)
        Y = solve_variational(model, 0.1, 2.0, dW, weights, base)
        np.testing.assert_allclose(Y.X, deterministic_volterra(model, 2.0, weights), rtol=1e-14)

    def test_variational_needs_matching_base(self) -> None:
        grid = TimeGrid(1.0, 8)
        weights = build_weights(grid, 0.7)
        dW = sample_wiener(grid, 0, 0)
        base = solve_volterra(zero_model(), 0.0, dW, weights)
        with pytest.raises(UsageError, match="base path"):
            solve_variational(zero_model(), 1.0, 1.0, dW, weights, base)


class TestShiftedPath:
    """Coupled additive path with a terminal-linear shift."""

    def test_shift_is_linear_in_time(self) -> None:
        grid = TimeGrid(2.0, 16)
        weights = build_weights(grid, 0.7)
        dW = sample_wiener(grid, 1, 0)
        model = linear_model(0.3)
        base = solve_volterra(model, 0.0, dW, weights)
        shifted = solve_shifted(model, 0.0, dW, weights, 0.8)
        np.testing.assert_allclose(shifted.X - base.X, 0.8 * grid.nodes / 2.0, atol=1e-14)

    def test_multiplicative_noise_is_rejected(self) -> None:
        grid = TimeGrid(1.0, 8)
        with pytest.raises(UsageError, match="additive"):
            solve_shifted(trig_model(), 0.0, sample_wiener(grid, 0, 0), build_weights(grid, 0.7), 1.0)

    def test_unknown_mode_is_rejected(self) -> None:
        grid = TimeGrid(1.0, 8)
        with pytest.raises(UsageError, match="mode"):
            solve_shifted(zero_model(), 0.0, sample_wiener(grid, 0, 0), build_weights(grid, 0.7), 1.0, mode="quadratic")


class TestEnsembleStatistics:
    """Moments and initial-condition stability."""

    def test_second_moment_of_additive_zero_drift(self) -> None:
        settings = SimulationSettings(H=0.7, n=32, paths=4000, seed=5)
        profile = second_moment_profile(zero_model(), 0.5, settings)
        exact = 0.25 + settings.weights.covariance(32, 32)
        assert abs(profile.second_moment[-1] - exact) <= 4.0 * profile.std_error[-1]
        assert profile.second_moment[0] == pytest.approx(0.25)
        assert profile.sup >= profile.second_moment[-1]

    def test_linear_lipschitz_ratio_is_deterministic(self) -> None:
        settings = SimulationSettings(H=0.5, n=16, paths=100, seed=1)
        ratio = initial_condition_lipschitz(linear_model(0.5), 1.0, 0.0, settings)
        assert ratio == pytest.approx((1.0 + 0.5 / 16) ** 32, rel=1e-10)

    def test_equal_points_raise(self) -> None:
        settings = SimulationSettings(H=0.7, n=8, paths=100)
        with pytest.raises(DomainError, match="distinct"):
            initial_condition_lipschitz(zero_model(), 1.0, 1.0, settings)
