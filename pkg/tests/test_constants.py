"""Unit tests for :mod:`constants` — explicit inequality constants."""

import math

import pytest

from fbmlab.constants import (
    default_theta,
    harnack_constants,
    maximal_constant,
    maximal_constant_scaled,
    transport_constants,
)
from fbmlab.errors import DomainError, HypothesisError
from fbmlab.kernel import alpha_H
from fbmlab.models import ModelBounds


def _bounds(K1: float = 1.0, K2: float = 1.0, K6: float = 1.0, sigma: float = 1.0) -> ModelBounds:
    return ModelBounds(K1=K1, K2=K2, K3=K1, K4=K2, K5=K2, K6=K6, sigma_sup=sigma)


class TestHarnackConstants:
    """Gradient and shift constants."""

    def test_brownian_gradient_constant(self) -> None:
        constants = harnack_constants(_bounds(), 0.5, 1.0)
        assert constants.C_H == 1.0
        assert constants.C_grad == pytest.approx(8.0 / 3.0, rel=1e-14)

    def test_brownian_shift_constant(self) -> None:
        constants = harnack_constants(_bounds(), 0.5, 1.0)
        assert constants.shift_base == pytest.approx(7.0 / 3.0, rel=1e-14)
        assert constants.C_shift(2.0) == pytest.approx(14.0 / 3.0, rel=1e-14)

    def test_zero_drift_keeps_memory_term_only(self) -> None:
        constants = harnack_constants(_bounds(K1=0.0), 0.7, 2.0)
        memory = constants.C_H**2 / (0.6 * 2.0**1.4)
        assert constants.shift_base == pytest.approx(memory)
        assert constants.C_grad == pytest.approx(2.0 * memory)

    def test_exponent_decreases_in_p(self) -> None:
        constants = harnack_constants(_bounds(), 0.7, 1.0)
        assert constants.harnack_exponent(2.0, 1.0) > constants.harnack_exponent(4.0, 1.0)
        assert constants.harnack_exponent(2.0, 0.0) == 0.0

    @pytest.mark.parametrize("p", [1.0, 0.5])
    def test_p_must_exceed_one(self, p: float) -> None:
        with pytest.raises(DomainError, match="exceed 1"):
            harnack_constants(_bounds(), 0.7, 1.0).C_shift(p)


class TestMaximalConstant:
    """C(p) of the maximal inequality."""

    @pytest.mark.parametrize("H, expected", [(0.75, 4.0), (0.6, 25.0)])
    def test_quadratic_values_on_unit_horizon(self, H: float, expected: float) -> None:
        assert maximal_constant(2.0, H, 1.0) == pytest.approx(expected, rel=1e-12)

    def test_horizon_power(self) -> None:
        # (H+1/2-theta) p^2/2 + (H-1/2) p - 1 = 2 + 0.5 - 1 at H=0.75, p=2
        assert maximal_constant(2.0, 0.75, 2.0) == pytest.approx(4.0 * 2.0**1.5, rel=1e-12)

    def test_scaled_variant(self) -> None:
        expected = (alpha_H(0.75) * 0.25) ** 2 * 4.0
        assert maximal_constant_scaled(2.0, 0.75, 1.0) == pytest.approx(expected, rel=1e-12)

    def test_short_memory_raises(self) -> None:
        with pytest.raises(HypothesisError, match="H > 1/2"):
            maximal_constant(2.0, 0.5, 1.0)

    def test_small_p_raises(self) -> None:
        with pytest.raises(DomainError, match="p >= 2"):
            maximal_constant(1.5, 0.75, 1.0)

    def test_inadmissible_theta_raises(self) -> None:
        with pytest.raises(DomainError, match="theta"):
            maximal_constant(2.0, 0.6, 1.0, theta=0.4)

    def test_default_theta(self) -> None:
        assert default_theta(0.75) == pytest.approx(0.25)
        assert 0.0 < default_theta(0.5000001) < 0.5


class TestTransportConstants:
    """alpha(T, H) and beta(T, H)."""

    def test_zero_lipschitz_constant(self) -> None:
        constants = transport_constants(_bounds(K6=0.0, sigma=2.0), 0.75, 1.0)
        assert constants.alpha_TH == pytest.approx(12.0)
        assert constants.beta_TH == pytest.approx(12.0)
        assert constants.C2 == pytest.approx(4.0)

    @pytest.mark.parametrize("T", [0.5, 1.0, 3.0])
    def test_l2_constant_below_horizon_times_uniform(self, T: float) -> None:
        constants = transport_constants(_bounds(K6=0.7), 0.8, T)
        assert constants.beta_TH <= T * constants.alpha_TH
        assert math.isfinite(constants.alpha_TH)
