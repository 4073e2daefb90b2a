"""
Explicit constants of the gradient, Harnack, maximal and transport
inequalities, assembled from the model bounds ``K1 ... K6``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from fbmlab.errors import DomainError, HypothesisError
from fbmlab.kernel import alpha_H, check_hurst, constant_CH
from fbmlab.models import ModelBounds


@dataclass(frozen=True)
class HarnackConstants:
    """Constants of the gradient / Harnack family.

    Attributes:
        C_grad: ``2 K4^2 (K3^2 T / 3 + C_H^2 / ((2-2H) T^2H))``.
        shift_base: ``K2^2 (C_H^2/((2-2H)T^2H) + 4 C_H K1 T^(1/2-H)/(5-2H) + K1^2 T/3)``,
            the constant of the shift log-Harnack inequality and of the
            entropy-gradient bound (divided there by ``alpha``).
    """

    H: float
    T: float
    C_H: float
    C_grad: float
    shift_base: float

    def C_shift(self, p: float) -> float:
        """``p / (p - 1) * shift_base``."""
        _require_p(p)
        return p / (p - 1.0) * self.shift_base

    def harnack_exponent(self, p: float, distance: float) -> float:
        """``p / (p - 1) * C_grad * distance^2``."""
        _require_p(p)
        return p / (p - 1.0) * self.C_grad * distance**2


def harnack_constants(bounds: ModelBounds, H: float, T: float) -> HarnackConstants:
    check_hurst(H)
    c = constant_CH(H)
    memory = c * c / ((2.0 - 2.0 * H) * T ** (2.0 * H))
    c_grad = 2.0 * bounds.K4**2 * (bounds.K3**2 * T / 3.0 + memory)
    base = bounds.K2**2 * (
        memory
        + 4.0 * c * bounds.K1 * T ** (0.5 - H) / (5.0 - 2.0 * H)
        + bounds.K1**2 * T / 3.0
    )
    return HarnackConstants(H=H, T=T, C_H=c, C_grad=c_grad, shift_base=base)


def default_theta(H: float) -> float:
    """``(2H - 1) / 2`` clipped into ``(0, 1/2)``."""
    return min(max((2.0 * H - 1.0) / 2.0, 1e-6), 0.5 - 1e-6)


def maximal_constant(p: float, H: float, T: float, theta: Optional[float] = None) -> float:
    """Constant ``C(p)`` of the maximal inequality for ``int K_H phi dW``::

        ((p-1)/(theta p))^(p-1) * ((H+1/2-theta) p + 2H - 3)^(-p/2)
            * T^((H+1/2-theta) p^2/2 + (H-1/2) p - 1)

    Raises:
        HypothesisError: If ``H <= 1/2``.
        DomainError: If ``p < 2`` or ``theta`` violates ``H > (1+theta)/2``
            or makes the middle exponent non-positive.
    """
    check_hurst(H)
    if H <= 0.5:
        raise HypothesisError(f"the maximal inequality needs H > 1/2, got {H}")
    if p < 2.0:
        raise DomainError(f"the maximal inequality needs p >= 2, got {p}")
    theta = default_theta(H) if theta is None else theta
    if not 0.0 < theta < 0.5:
        raise DomainError(f"theta must lie in (0, 1/2), got {theta}")
    if not H > (1.0 + theta) / 2.0:
        raise DomainError(f"theta={theta} needs H > (1+theta)/2, got H={H}")
    middle = (H + 0.5 - theta) * p + 2.0 * H - 3.0
    if middle <= 0.0:
        raise DomainError(
            f"(H+1/2-theta)p + 2H - 3 = {middle:.6g} must be positive (p={p}, H={H}, theta={theta})"
        )
    power = (H + 0.5 - theta) * p * p / 2.0 + (H - 0.5) * p - 1.0
    return ((p - 1.0) / (theta * p)) ** (p - 1.0) * middle ** (-p / 2.0) * T**power


def maximal_constant_scaled(p: float, H: float, T: float, theta: Optional[float] = None) -> float:
    """``alpha_bar_H^p * C(p)``, reported alongside the assembled constant."""
    return (alpha_H(H) * (H - 0.5)) ** p * maximal_constant(p, H, T, theta)


@dataclass(frozen=True)
class TransportConstants:
    """Constants ``alpha(T,H)`` (uniform metric) and ``beta(T,H)`` (L2 metric)."""

    H: float
    T: float
    theta: float
    C2: float
    alpha_TH: float
    beta_TH: float


def transport_constants(
    bounds: ModelBounds, H: float, T: float, theta: Optional[float] = None
) -> TransportConstants:
    theta = default_theta(H) if theta is None else theta
    c2 = maximal_constant(2.0, H, T, theta)
    scale = 3.0 * (bounds.sigma_sup * T**H) ** 2
    x = 3.0 * bounds.K6**2 * T * (T ** (2.0 * H) + c2)
    growth = math.expm1(x) / x if x > 0.0 else 1.0
    return TransportConstants(
        H=H,
        T=T,
        theta=theta,
        C2=c2,
        alpha_TH=scale * math.exp(x),
        beta_TH=scale * T * growth,
    )


def _require_p(p: float) -> None:
    if not p > 1.0:
        raise DomainError(f"Harnack exponent p must exceed 1, got {p}")
