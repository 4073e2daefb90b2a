"""
Scalar special functions used by the kernel: Gamma, Beta and the Gauss
hypergeometric function ``F(a, b, c, z)``.

The scalar routines are self-contained (Lanczos Gamma, Pfaff-transformed
power series) so that every constant of the library can be traced to a
documented approximation. :func:`hyp2f1_array` is the vectorised
counterpart used when whole weight tables are built; it delegates to
:func:`scipy.special.hyp2f1` on the same transformed argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from fbmlab.errors import DomainError

# Lanczos approximation, g = 7, nine coefficients.
_LANCZOS_G = 7
_LANCZOS_P = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_SQRT_2PI = 2.506628274631000502417
_MAX_EXACT_FACTORIAL = 20

_SERIES_EPS = 1e-16
_SERIES_MAX_TERMS = 100_000
# Above this transformed argument the series is re-expanded around 1.
_CONNECTION_THRESHOLD = 0.75


def _is_nonpositive_integer(x: float) -> bool:
    return x <= 0.0 and float(x).is_integer()


def gamma(x: float) -> float:
    """Gamma function for real, non-pole arguments.

    Raises:
        DomainError: If ``x`` is a non-positive integer or not finite.
    """
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"gamma requires a finite argument, got {x}")
    if _is_nonpositive_integer(x):
        raise DomainError(f"gamma has a pole at {x:g}")
    if x.is_integer() and x <= _MAX_EXACT_FACTORIAL + 1:
        return float(math.factorial(int(x) - 1))
    if x < 0.5:
        # Reflection formula.
        return math.pi / (math.sin(math.pi * x) * gamma(1.0 - x))

    x -= 1.0
    acc = _LANCZOS_P[0]
    for i in range(1, _LANCZOS_G + 2):
        acc += _LANCZOS_P[i] / (x + i)
    t = x + _LANCZOS_G + 0.5
    return _SQRT_2PI * t ** (x + 0.5) * math.exp(-t) * acc


def rgamma(x: float) -> float:
    """Reciprocal Gamma function, ``0`` at the poles."""
    if _is_nonpositive_integer(float(x)):
        return 0.0
    return 1.0 / gamma(x)


def beta(x: float, y: float) -> float:
    """Euler Beta function ``B(x, y)`` for positive arguments.

    Raises:
        DomainError: If either argument is not positive.
    """
    if x <= 0.0 or y <= 0.0:
        raise DomainError(f"beta requires positive arguments, got ({x}, {y})")
    if x + y > 170.0:
        return math.exp(math.lgamma(x) + math.lgamma(y) - math.lgamma(x + y))
    return gamma(x) * gamma(y) / gamma(x + y)


@dataclass(frozen=True)
class HypergeomParams:
    """Arguments of ``F(a, b, c, z)`` on the supported real domain."""

    a: float
    b: float
    c: float
    z: float

    def __post_init__(self) -> None:
        if _is_nonpositive_integer(self.c):
            raise DomainError(
                f"hyp2f1 requires c not a non-positive integer, got c={self.c:g}"
            )
        if not math.isfinite(self.z) or not (self.z <= 0.0 or abs(self.z) < 1.0):
            raise DomainError(
                f"hyp2f1 is supported for z <= 0 or |z| < 1, got z={self.z}"
            )


def hyp2f1(params: HypergeomParams) -> float:
    """Gauss hypergeometric function ``F(a, b, c, z)``.

    Negative arguments are mapped into ``[0, 1)`` with the Pfaff
    transformation ``F(a,b,c,z) = (1-z)^(-a) F(a, c-b, c, z/(z-1))``
    before summing the power series.

    Raises:
        DomainError: If the series does not converge within the term cap.
    """
    a, b, c, z = params.a, params.b, params.c, params.z
    if a == 0.0 or b == 0.0 or z == 0.0:
        return 1.0
    if z < 0.0:
        w = z / (z - 1.0)
        return (1.0 - z) ** (-a) * _hyp2f1_unit(a, c - b, c, w)
    return _hyp2f1_unit(a, b, c, z)


def hyp2f1_series(a: float, b: float, c: float, z: float, terms: int) -> float:
    """Plain partial sum of the hypergeometric series with ``terms`` terms."""
    total = 1.0
    term = 1.0
    for k in range(terms - 1):
        term *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * z
        total += term
    return total


def hyp2f1_array(
    a: float, b: float, c: float, z: np.ndarray | float
) -> np.ndarray:
    """Vectorised ``F(a, b, c, z)`` for ``z <= 0``, via the Pfaff argument."""
    z = np.asarray(z, dtype=float)
    if np.any(z > 0.0):
        raise DomainError("hyp2f1_array is restricted to non-positive arguments")
    if a == 0.0 or b == 0.0:
        return np.ones_like(z)
    w = z / (z - 1.0)
    return (1.0 - z) ** (-a) * special.hyp2f1(a, c - b, c, w)


# ----------------------------------------------------------------------
# Internal helpers
# ----------------------------------------------------------------------


def _hyp2f1_unit(a: float, b: float, c: float, w: float) -> float:
    """``F(a, b, c, w)`` for ``0 <= w < 1``."""
    if w > _CONNECTION_THRESHOLD:
        s = c - a - b
        if not float(s).is_integer():
            return _connection_near_one(a, b, c, w)
    return _power_series(a, b, c, w)


def _power_series(a: float, b: float, c: float, w: float) -> float:
    total = 1.0
    term = 1.0
    for k in range(_SERIES_MAX_TERMS):
        term *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * w
        total += term
        if term == 0.0 or abs(term) < _SERIES_EPS * abs(total):
            return total
    raise DomainError(
        f"hyp2f1 series did not converge in {_SERIES_MAX_TERMS} terms "
        f"(a={a}, b={b}, c={c}, z={w})"
    )


def _connection_near_one(a: float, b: float, c: float, w: float) -> float:
    """Re-expand ``F(a, b, c, w)`` around ``w = 1`` (``c-a-b`` non-integer)."""
    s = c - a - b
    v = 1.0 - w
    first = gamma(c) * gamma(s) * rgamma(c - a) * rgamma(c - b)
    second = gamma(c) * gamma(-s) * rgamma(a) * rgamma(b)
    total = 0.0
    if first != 0.0:
        total += first * _power_series(a, b, 1.0 - s, v)
    if second != 0.0:
        total += second * v**s * _power_series(c - a, c - b, 1.0 + s, v)
    return total
