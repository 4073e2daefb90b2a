"""Unit tests for :mod:`kernel` — K_H, its constants and weight tables."""

import math

import numpy as np
import pytest
from scipy import integrate

from fbmlab.errors import DomainError, HypothesisError, UsageError
from fbmlab.grid import GridFunction, TimeGrid
from fbmlab.kernel import (
    HurstParams,
    alpha_H,
    apply_KH,
    build_weights,
    check_hurst,
    constant_CH,
    covariance_by_quadrature,
    covariance_RH,
    covariance_table,
    effective_power,
    identity_midpoint_error,
    identity_table,
    kernel_constants,
    kernel_dKdt,
    kernel_KH,
    kernel_KH_integral,
    kernel_KH_remainder,
    kernel_power_integral,
    kernel_values,
    representation_table,
)


class TestHurstParameter:
    """Parameter validation and the admissible set."""

    @pytest.mark.parametrize("H", [0.0, 1.0, -0.2, math.nan])
    def test_outside_unit_interval_raises(self, H: float) -> None:
        with pytest.raises(DomainError, match="Hurst"):
            check_hurst(H)

    def test_admissible_exponents(self) -> None:
        params = HurstParams(0.7)
        assert params.H0 == pytest.approx(0.2)
        assert params.admissible(4.0)
        assert not params.admissible(5.0)
        assert params.kappa_p(2.0) == pytest.approx(1.0 / 0.6)

    def test_kappa_outside_admissible_set_raises(self) -> None:
        with pytest.raises(DomainError, match="kappa_p"):
            HurstParams(0.7).kappa_p(5.0)

    @pytest.mark.parametrize("H, p", [(0.7, 5.0), (0.25, 4.0), (0.9, 2.5), (0.3, 5.0)])
    def test_boundary_product_is_excluded(self, H: float, p: float) -> None:
        params = HurstParams(H)
        assert not params.admissible(p)
        with pytest.raises(DomainError, match="kappa_p"):
            params.kappa_p(p)


class TestKernelConstants:
    """alpha_H, alpha_bar_H and C_H."""

    def test_brownian_values(self) -> None:
        constants = kernel_constants(0.5)
        assert constants.alpha_H == pytest.approx(1.0)
        assert constants.alpha_bar_H == 0.0
        assert constants.C_H == 1.0

    @pytest.mark.parametrize("H, expected", [(0.7, 0.7798), (0.75, 0.713)])
    def test_identity_constant(self, H: float, expected: float) -> None:
        assert constant_CH(H) == pytest.approx(expected, rel=2e-3)

    def test_alpha_is_positive(self) -> None:
        for H in (0.1, 0.3, 0.6, 0.9):
            assert alpha_H(H) > 0.0

    @pytest.mark.parametrize("H", [0.8, 0.9])
    def test_identity_constant_at_large_H(self, H: float) -> None:
        integral, _ = integrate.quad(
            lambda s: float(kernel_values(1.0, s, H)) * s ** (0.5 - H), 0.0, 1.0, limit=200
        )
        assert constant_CH(H) == pytest.approx(1.0 / integral, rel=1e-6)

    def test_identity_constant_reference_value(self) -> None:
        assert constant_CH(0.9) == pytest.approx(0.4506781378557, rel=1e-10)

    @pytest.mark.parametrize("H", [0.3, 0.7, 0.9])
    def test_power_integral_at_identity_exponent(self, H: float) -> None:
        assert kernel_power_integral(2.0, H, 0.5 - H) == pytest.approx(2.0 / constant_CH(H), rel=1e-12)

    def test_power_integral_at_brownian_H(self) -> None:
        assert kernel_power_integral(2.0, 0.5, 1.0) == pytest.approx(2.0)

    @pytest.mark.parametrize("H, exponent", [(0.3, 0.4), (0.7, 0.0), (0.85, -0.2)])
    def test_power_integral_matches_quadrature(self, H: float, exponent: float) -> None:
        integral, _ = integrate.quad(
            lambda s: float(kernel_values(1.5, s, H)) * s**exponent, 0.0, 1.5, limit=200
        )
        assert kernel_power_integral(1.5, H, exponent) == pytest.approx(integral, rel=1e-7)

    def test_power_integral_rejects_non_integrable_exponent(self) -> None:
        with pytest.raises(DomainError, match="not integrable"):
            kernel_power_integral(1.0, 0.7, -0.9)


class TestPointwiseKernel:
    """Equivalent forms of K_H(t, s)."""

    def test_brownian_kernel_is_one(self) -> None:
        assert kernel_KH(1.0, 0.3, 0.5) == 1.0

    def test_requires_ordered_times(self) -> None:
        with pytest.raises(DomainError, match="0 < s < t"):
            kernel_KH(0.5, 0.5, 0.7)

    @pytest.mark.parametrize("t, s", [(1.0, 0.5), (1.0, 0.05), (2.0, 1.9)])
    def test_integral_representation(self, t: float, s: float) -> None:
        assert kernel_KH(t, s, 0.7) == pytest.approx(kernel_KH_integral(t, s, 0.7), rel=1e-6)

    @pytest.mark.parametrize("H", [0.2, 0.3, 0.7])
    def test_remainder_representation(self, H: float) -> None:
        assert kernel_KH(1.0, 0.4, H) == pytest.approx(kernel_KH_remainder(1.0, 0.4, H), rel=1e-6)

    def test_integral_form_needs_long_memory(self) -> None:
        with pytest.raises(HypothesisError, match="H > 1/2"):
            kernel_KH_integral(1.0, 0.5, 0.3)

    def test_vectorised_matches_scalar(self) -> None:
        s = np.array([0.1, 0.4, 0.9])
        values = kernel_values(1.0, s, 0.3)
        for si, vi in zip(s, values):
            assert vi == pytest.approx(kernel_KH(1.0, float(si), 0.3), rel=1e-10)

    def test_time_derivative_matches_difference(self) -> None:
        h = 1e-6
        numeric = (kernel_KH(1.0 + h, 0.4, 0.7) - kernel_KH(1.0 - h, 0.4, 0.7)) / (2.0 * h)
        assert kernel_dKdt(1.0, 0.4, 0.7) == pytest.approx(numeric, rel=1e-5)

    @pytest.mark.parametrize("H", [0.3, 0.7, 0.9])
    def test_vectorised_near_origin_matches_scalar(self, H: float) -> None:
        for s in (0.01, 0.2, 0.45, 0.6):
            assert float(kernel_values(1.0, s, H)) == pytest.approx(kernel_KH(1.0, s, H), rel=1e-8)

    def test_vectorised_far_below_diagonal(self) -> None:
        value = float(kernel_values(1.0, 1e-30, 0.9))
        assert value == pytest.approx(0.5 * alpha_H(0.9) * 1e-30**-0.4, rel=1e-9)

    def test_vectorised_keeps_broadcast_shape(self) -> None:
        values = kernel_values(np.array([[1.0], [2.0]]), np.array([0.1, 0.9]), 0.7)
        assert values.shape == (2, 2)
        assert values[1, 1] == pytest.approx(kernel_KH(2.0, 0.9, 0.7), rel=1e-8)


class TestCovariance:
    """R_H and its kernel factorisation."""

    def test_brownian_covariance_is_minimum(self) -> None:
        assert covariance_RH(0.3, 0.8, 0.5) == pytest.approx(0.3)

    def test_variance_is_power(self) -> None:
        assert covariance_RH(2.0, 2.0, 0.7) == pytest.approx(2.0**1.4)

    def test_negative_times_raise(self) -> None:
        with pytest.raises(DomainError, match="non-negative"):
            covariance_RH(-1.0, 1.0, 0.7)

    @pytest.mark.parametrize("H", [0.3, 0.7])
    def test_quadrature_factorisation(self, H: float) -> None:
        assert covariance_by_quadrature(1.0, 0.6, H) == pytest.approx(covariance_RH(1.0, 0.6, H), rel=1e-4)

    def test_weight_factorisation_on_fine_grid(self) -> None:
        rows = covariance_table(TimeGrid(1.0, 2000), 0.7)
        assert max(row.error / row.reference for row in rows) <= 1e-3


class TestWeights:
    """Integrated weight tables."""

    def test_shape_and_triangularity(self) -> None:
        weights = build_weights(TimeGrid(1.0, 16), 0.7)
        assert weights.w.shape == (17, 16)
        assert np.all(weights.w[0] == 0.0)
        assert np.all(np.triu(weights.w[1:], 1) == 0.0)

    def test_brownian_weights_are_dt(self) -> None:
        grid = TimeGrid(1.0, 8)
        w = build_weights(grid, 0.5).w
        assert w[8, 0] == pytest.approx(grid.dt)
        assert w[3, 2] == pytest.approx(grid.dt)
        assert w[3, 3] == 0.0

    def test_weights_are_read_only(self) -> None:
        weights = build_weights(TimeGrid(1.0, 8), 0.3)
        with pytest.raises(ValueError):
            weights.w[1, 0] = 0.0

    def test_non_integrable_exponent_raises(self) -> None:
        with pytest.raises(DomainError, match="not integrable"):
            build_weights(TimeGrid(1.0, 8), 0.7, exponent=-0.9)

    def test_effective_power_of_zero_exponent(self) -> None:
        np.testing.assert_allclose(effective_power(TimeGrid(1.0, 16), 0.7, 0.0), 1.0)

    def test_apply_to_constant_at_brownian_H(self) -> None:
        grid = TimeGrid(1.0, 8)
        image = apply_KH(GridFunction.constant(grid, 2.0), build_weights(grid, 0.5))
        np.testing.assert_allclose(image.node_values(), 2.0 * grid.nodes)

    def test_apply_on_other_grid_raises(self) -> None:
        with pytest.raises(UsageError, match="grid mismatch"):
            apply_KH(GridFunction.constant(TimeGrid(1.0, 4), 1.0), build_weights(TimeGrid(1.0, 8), 0.7))

    def test_apply_with_mismatched_exponent_raises(self) -> None:
        grid = TimeGrid(1.0, 8)
        with pytest.raises(UsageError, match="exponent"):
            apply_KH(GridFunction.power(grid, 0.3), build_weights(grid, 0.7, 0.1))

    def test_plain_weights_route_power_functions(self) -> None:
        grid = TimeGrid(1.0, 32)
        routed = apply_KH(GridFunction.power(grid, -0.2, 1.5), build_weights(grid, 0.7)).node_values()
        direct = 1.5 * build_weights(grid, 0.7, -0.2).w.sum(axis=1)
        np.testing.assert_allclose(routed, direct, rtol=1e-14)

    @pytest.mark.parametrize("H", [0.25, 0.6, 0.75, 0.9])
    @pytest.mark.parametrize("identity_exponent", [False, True])
    def test_row_sums_match_closed_form(self, H: float, identity_exponent: bool) -> None:
        grid = TimeGrid(1.0, 64)
        exponent = 0.5 - H if identity_exponent else 0.0
        w = build_weights(grid, H, exponent).w
        for i in (16, 32, 64):
            expected = kernel_power_integral(float(grid.nodes[i]), H, exponent)
            assert w[i].sum() == pytest.approx(expected, rel=2e-4)


class TestKernelIdentity:
    """K_H(C_H s^(1/2-H))(t) = t."""

    @pytest.mark.parametrize("H", [0.25, 0.5, 0.75])
    def test_identity_on_fine_grid(self, H: float) -> None:
        rows = identity_table(TimeGrid(1.0, 2000), H)
        assert max(row.error for row in rows) <= 1e-3

    @pytest.mark.parametrize("H", [0.8, 0.9])
    def test_identity_at_large_H(self, H: float) -> None:
        rows = identity_table(TimeGrid(1.0, 256), H)
        assert max(row.error for row in rows) <= 1e-3

    def test_midpoint_sampling_loses_the_singular_cell(self) -> None:
        grid = TimeGrid(1.0, 2000)
        assert identity_midpoint_error(grid, 0.25) <= 1e-3
        routed = max(row.error for row in identity_table(grid, 0.75))
        assert identity_midpoint_error(grid, 0.75) > 10.0 * routed

    def test_representation_table_agrees(self) -> None:
        for H in (0.3, 0.7):
            rows = representation_table(H, points=12)
            assert len(rows) == 12
            assert max(row.error / max(1.0, abs(row.reference)) for row in rows) <= 1e-6
