"""
Left-sided Riemann–Liouville fractional integral and derivative on a
uniform grid, and the fractional-calculus form of the kernel operator.

The integral uses product integration: the integrand is replaced by its
piecewise-linear interpolant and integrated exactly against the singular
factor ``(t_i - s)**(alpha - 1)``. Integrands with an origin power
``s**gamma`` get an exact first cell, so results keep full accuracy for
the ``s**(1/2 - H)`` type functions the kernel identities use.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy import special

from fbmlab.errors import DomainError
from fbmlab.grid import GridFunction
from fbmlab.kernel import alpha_H, check_hurst
from fbmlab.specfun import beta, gamma

logger = logging.getLogger(__name__)


def frac_integral(f: GridFunction, alpha: float) -> GridFunction:
    """Riemann–Liouville integral ``I^alpha f`` at every grid node.

    Args:
        f: Integrand ``s**gamma * g(s)``.
        alpha: Order, ``> 0``.

    Returns:
        A grid function with origin exponent ``gamma + alpha``; its origin
        value is the limit ``g(0) Gamma(gamma+1) / Gamma(gamma+alpha+1)``.

    Raises:
        DomainError: If ``alpha <= 0``.
    """
    if not alpha > 0.0:
        raise DomainError(f"fractional integral order must be positive, got {alpha}")

    grid = f.grid
    n, dt = grid.n, grid.dt
    exponent = f.exponent
    fn = f.node_values()

    lag = np.arange(n, dtype=float)
    i = lag + 1.0
    ap1 = alpha + 1.0

    coeffs = np.empty(n)
    coeffs[0] = 1.0
    if n > 1:
        m = lag[1:]
        coeffs[1:] = (m + 1.0) ** ap1 - 2.0 * m**ap1 + (m - 1.0) ** ap1
    first = (i - 1.0) ** ap1 - (i - 1.0 - alpha) * i**alpha

    out = np.zeros(n + 1)
    out[1:] = dt**alpha / gamma(alpha + 2.0) * (
        first * fn[0] + np.convolve(coeffs, fn[1:])[:n]
    )

    if not f.is_plain:
        # Replace the interpolated first cell by the exact power integral.
        hat = (
            dt**alpha
            / gamma(alpha)
            * (i * (i**alpha - (i - 1.0) ** alpha) / alpha - (i**ap1 - (i - 1.0) ** ap1) / ap1)
        )
        g_first = f.cell_factor()[0]
        out[1:] += -fn[1] * hat + g_first * dt ** (alpha + exponent) * _power_moments(
            alpha, exponent, n
        ) / gamma(alpha)

    new_exponent = exponent + alpha
    values = np.empty(n + 1)
    values[1:] = out[1:] / grid.nodes[1:] ** new_exponent
    values[0] = f.values[0] * gamma(exponent + 1.0) / gamma(new_exponent + 1.0)
    return GridFunction(grid, values, new_exponent)


def frac_derivative(f: GridFunction, alpha: float) -> GridFunction:
    """Riemann–Liouville derivative ``D^alpha f = d/dt I^(1-alpha) f``.

    The time derivative is a forward difference (backward at the last node).

    Raises:
        DomainError: If ``alpha`` is outside ``(0, 1)``.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"fractional derivative order must lie in (0, 1), got {alpha}")
    grid = f.grid
    h = frac_integral(f, 1.0 - alpha).node_values()
    out = np.empty(grid.node_count)
    out[:-1] = np.diff(h) / grid.dt
    out[-1] = (h[-1] - h[-2]) / grid.dt
    return GridFunction(grid, out)


def compose_KH_via_fractional(f: GridFunction, H: float) -> GridFunction:
    """The kernel operator written as a composition of fractional integrals.

    For ``H <= 1/2`` this is ``I^(2H) s^(1/2-H) I^(1/2-H) s^(H-1/2) f``,
    for ``H >= 1/2`` it is ``I^1 s^(H-1/2) I^(H-1/2) s^(1/2-H) f``. The
    composition realises the kernel without its normalising constant, so
    the result is multiplied by ``alpha_H * Gamma(H + 1/2)``.

    Raises:
        DomainError: If ``H`` is outside ``(0, 1)``.
    """
    check_hurst(H)
    d = H - 0.5
    if H <= 0.5:
        inner = _integral_or_identity(f.times_power(d), -d)
        out = frac_integral(inner.times_power(-d), 2.0 * H)
    else:
        inner = _integral_or_identity(f.times_power(-d), d)
        out = frac_integral(inner.times_power(d), 1.0)
    return out.scaled(alpha_H(H) * gamma(H + 0.5))


# ----------------------------------------------------------------------
# Internal helpers
# ----------------------------------------------------------------------


def _integral_or_identity(f: GridFunction, alpha: float) -> GridFunction:
    if alpha == 0.0:
        return f
    return frac_integral(f, alpha)


def _power_moments(alpha: float, exponent: float, n: int) -> np.ndarray:
    """``int_0^1 (i - u)**(alpha-1) u**exponent du`` for ``i = 1..n``."""
    out = np.empty(n)
    out[0] = beta(exponent + 1.0, alpha)
    if n > 1:
        i = np.arange(2, n + 1, dtype=float)
        out[1:] = (
            i ** (alpha - 1.0)
            / (exponent + 1.0)
            * special.hyp2f1(1.0 - alpha, exponent + 1.0, exponent + 2.0, 1.0 / i)
        )
    return out
