"""Unit tests for :mod:`transport` — coupling, relative entropy and T2 checks."""

from pathlib import Path

import numpy as np
import pytest

from fbmlab.ensemble import SimulationSettings
from fbmlab.errors import ConfigurationError, DomainError, HypothesisError, UsageError
from fbmlab.grid import TimeGrid
from fbmlab.kernel import build_weights
from fbmlab.models import linear_model, ou_model, zero_model
from fbmlab.noise import sample_wiener
from fbmlab.transport import (
    DriftShift,
    MaximalIntegrand,
    check_maximal_inequality,
    check_T2,
    coupled_paths,
    coupling_distance,
    distance_table,
    exact_T2_check,
    relative_entropy,
)


def _settings(**overrides) -> SimulationSettings:
    values = dict(H=0.75, T=1.0, n=64, paths=4000, seed=99, batch_size=1024)
    values.update(overrides)
    return SimulationSettings(**values)


class TestDriftShift:
    """Shift specifications."""

    def test_parse_constant_and_linear(self) -> None:
        grid = TimeGrid(1.0, 4)
        np.testing.assert_allclose(DriftShift.parse("const:0.5").values(grid), 0.5)
        np.testing.assert_allclose(DriftShift.parse("linear:2").values(grid), 2.0 * grid.midpoints)

    def test_parse_table(self, tmp_path: Path) -> None:
        path = tmp_path / "u.csv"
        path.write_text("t,u\n0,0\n1,1\n")
        shift = DriftShift.parse(f"table:{path}")
        np.testing.assert_allclose(shift.values(TimeGrid(1.0, 2)), [0.25, 0.75])

    def test_feedback_shift_is_adapted(self) -> None:
        shift = DriftShift.parse("feedback:2")
        assert not shift.is_deterministic
        with pytest.raises(UsageError, match="adapted"):
            shift.values(TimeGrid(1.0, 4))

    @pytest.mark.parametrize("spec", ["const:abc", "wiggle:1", "table:"])
    def test_invalid_specs_raise(self, spec: str) -> None:
        with pytest.raises(ConfigurationError):
            DriftShift.parse(spec)

    def test_shift_needs_exactly_one_form(self) -> None:
        with pytest.raises(UsageError, match="either"):
            DriftShift("empty")


class TestRelativeEntropy:
    """Girsanov entropy of a shift."""

    def test_constant_shift(self) -> None:
        assert relative_entropy(DriftShift.constant(1.0), TimeGrid(1.0, 64)) == pytest.approx(0.5, rel=1e-14)

    def test_zero_shift(self) -> None:
        assert relative_entropy(DriftShift.constant(0.0), TimeGrid(1.0, 8)) == 0.0

    def test_linear_shift(self) -> None:
        assert relative_entropy(DriftShift.linear(1.0), TimeGrid(1.0, 512)) == pytest.approx(1.0 / 6.0, abs=1e-6)

    def test_sign_does_not_matter(self) -> None:
        grid = TimeGrid(2.0, 32)
        assert relative_entropy(DriftShift.constant(-0.7), grid) == relative_entropy(DriftShift.constant(0.7), grid)

    def test_adapted_shift_needs_states(self) -> None:
        grid = TimeGrid(1.0, 8)
        shift = DriftShift.feedback(2.0)
        with pytest.raises(UsageError, match="shifted paths"):
            relative_entropy(shift, grid)
        assert relative_entropy(shift, grid, np.zeros((9, 3))) == pytest.approx(2.0)


class TestCoupling:
    """Synchronous coupling of shifted and reference paths."""

    def test_zero_shift_gives_identical_paths(self) -> None:
        grid = TimeGrid(1.0, 32)
        shifted, reference = coupled_paths(
            linear_model(0.5), 0.2, DriftShift.constant(0.0), sample_wiener(grid, 3, 0), build_weights(grid, 0.75)
        )
        assert np.array_equal(shifted.X, reference.X)

    def test_drift_free_gap_is_deterministic(self) -> None:
        grid = TimeGrid(1.0, 32)
        weights = build_weights(grid, 0.75)
        shifted, reference = coupled_paths(
            zero_model(2.0), 0.0, DriftShift.constant(0.5), sample_wiener(grid, 3, 0), weights
        )
        np.testing.assert_allclose(shifted.X - reference.X, weights.w @ np.full(32, 1.0), atol=1e-12)

    def test_distance_metrics(self) -> None:
        grid = TimeGrid(1.0, 4)
        difference = np.array([[0.0], [1.0], [-2.0], [1.0], [0.0]])
        assert coupling_distance(difference, grid, "uniform")[0] == 4.0
        assert coupling_distance(difference, grid, "l2")[0] == pytest.approx(1.5)

    def test_unknown_metric_raises(self) -> None:
        with pytest.raises(DomainError, match="metric"):
            coupling_distance(np.zeros((5, 1)), TimeGrid(1.0, 4), "sup")

    def test_distance_table(self) -> None:
        table = distance_table(ou_model(1.0), 0.0, DriftShift.constant(0.5), _settings(n=16, paths=200))
        assert len(table.rows) == 17
        assert table.rows[0] == [0.0, 0.0]


class TestTransportation:
    """E d(X, Y)^2 <= 2 C H(Q|P)."""

    @pytest.mark.parametrize("metric", ["uniform", "l2"])
    def test_mean_reverting_model(self, metric: str) -> None:
        report = check_T2(ou_model(1.0), 0.0, DriftShift.constant(0.5), metric, _settings())
        assert report.passed
        assert report.requirements["l2 <= T * uniform"]
        assert report.details["entropy"] == pytest.approx(0.125)

    def test_adapted_shift(self) -> None:
        report = check_T2(zero_model(), 0.0, DriftShift.feedback(1.0), "uniform", _settings(H=0.7))
        assert report.rhs_se > 0.0
        assert report.passed

    def test_zero_shift_has_zero_distance(self) -> None:
        report = check_T2(linear_model(0.5), 0.0, DriftShift.constant(0.0), "l2", _settings(paths=200))
        assert report.lhs == 0.0
        assert report.passed

    def test_short_memory_raises(self) -> None:
        with pytest.raises(HypothesisError, match="H > 1/2"):
            check_T2(zero_model(), 0.0, DriftShift.constant(1.0), "uniform", _settings(H=0.5))

    @pytest.mark.parametrize("metric", ["uniform", "l2"])
    def test_exact_check(self, metric: str) -> None:
        report = exact_T2_check(zero_model(), DriftShift.constant(1.0), metric, _settings())
        assert report.exact
        assert report.passed
        assert report.details["entropy"] == pytest.approx(0.5)

    def test_exact_check_needs_zero_drift(self) -> None:
        with pytest.raises(UsageError, match="b = 0"):
            exact_T2_check(linear_model(0.5), DriftShift.constant(1.0), "uniform", _settings())


class TestMaximalInequality:
    """Moments of the running supremum of Volterra integrals."""

    def test_zero_integrand(self) -> None:
        report = check_maximal_inequality(MaximalIntegrand.parse("const:0"), 2.0, _settings(paths=200))
        assert report.lhs == 0.0
        assert report.passed

    def test_constant_integrand(self) -> None:
        report = check_maximal_inequality(MaximalIntegrand.parse("const:1"), 2.0, _settings())
        assert report.constants["C_p"] == pytest.approx(4.0)
        assert report.details["phi_moment"] == pytest.approx(1.0)
        assert report.passed

    def test_linear_integrand(self) -> None:
        report = check_maximal_inequality(MaximalIntegrand.parse("linear"), 2.0, _settings(H=0.6))
        assert report.passed

    def test_short_memory_raises(self) -> None:
        with pytest.raises(HypothesisError):
            check_maximal_inequality(MaximalIntegrand.parse("const:1"), 2.0, _settings(H=0.5))

    @pytest.mark.parametrize("spec", ["const", "square", "linear:x"])
    def test_invalid_integrands_raise(self, spec: str) -> None:
        with pytest.raises(ConfigurationError):
            MaximalIntegrand.parse(spec)
