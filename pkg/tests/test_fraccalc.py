"""Unit tests for :mod:`fraccalc` — Riemann–Liouville operators."""

import math

import numpy as np
import pytest

from fbmlab.errors import DomainError
from fbmlab.fraccalc import compose_KH_via_fractional, frac_derivative, frac_integral
from fbmlab.grid import GridFunction, TimeGrid
from fbmlab.kernel import apply_KH, build_weights


def _affine(grid: TimeGrid) -> GridFunction:
    return GridFunction.from_callable(grid, lambda s: 1.0 + s)


class TestFractionalIntegral:
    """I^alpha on a uniform grid."""

    def test_constant_has_closed_form(self) -> None:
        grid = TimeGrid(1.0, 64)
        result = frac_integral(GridFunction.constant(grid, 1.0), 0.4)
        expected = grid.nodes**0.4 / math.gamma(1.4)
        np.testing.assert_allclose(result.node_values(), expected, atol=1e-12)

    def test_linear_function_is_exact(self) -> None:
        grid = TimeGrid(1.0, 32)
        f = GridFunction.from_callable(grid, lambda s: s)
        expected = grid.nodes**1.3 / math.gamma(2.3)
        np.testing.assert_allclose(frac_integral(f, 0.3).node_values(), expected, atol=1e-12)

    def test_power_integrand_uses_exact_first_cell(self) -> None:
        grid = TimeGrid(1.0, 128)
        gamma_ = -0.3
        result = frac_integral(GridFunction.power(grid, gamma_), 0.5)
        expected = math.gamma(gamma_ + 1.0) / math.gamma(gamma_ + 1.5) * grid.nodes**(gamma_ + 0.5)
        np.testing.assert_allclose(result.node_values()[16:], expected[16:], rtol=1e-2)
        assert result.exponent == pytest.approx(0.2)

    def test_semigroup(self) -> None:
        grid = TimeGrid(1.0, 2048)
        f = _affine(grid)
        twice = frac_integral(frac_integral(f, 0.4), 0.3).node_values()
        once = frac_integral(f, 0.7).node_values()
        assert np.max(np.abs(twice - once)) <= 5e-3

    @pytest.mark.parametrize("alpha", [0.0, -0.5])
    def test_non_positive_order_raises(self, alpha: float) -> None:
        with pytest.raises(DomainError, match="positive"):
            frac_integral(GridFunction.constant(TimeGrid(1.0, 4), 1.0), alpha)


class TestFractionalDerivative:
    """D^alpha as the left inverse of I^alpha."""

    def test_inverts_integral(self) -> None:
        grid = TimeGrid(1.0, 2048)
        f = _affine(grid)
        recovered = frac_derivative(frac_integral(f, 0.4), 0.4).node_values()
        assert np.max(np.abs(recovered - f.node_values())) <= 2e-2

    @pytest.mark.parametrize("alpha", [0.0, 1.0])
    def test_order_outside_unit_interval_raises(self, alpha: float) -> None:
        with pytest.raises(DomainError, match="\\(0, 1\\)"):
            frac_derivative(GridFunction.constant(TimeGrid(1.0, 4), 1.0), alpha)


class TestComposition:
    """Kernel operator as a composition of fractional integrals."""

    @pytest.mark.parametrize("H", [0.3, 0.5, 0.7])
    def test_agrees_with_weight_table(self, H: float) -> None:
        grid = TimeGrid(1.0, 2048)
        f = _affine(grid)
        composed = compose_KH_via_fractional(f, H).node_values()
        direct = apply_KH(f, build_weights(grid, H)).node_values()
        assert np.max(np.abs(composed - direct)) <= 1e-2
