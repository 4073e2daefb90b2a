"""
The Volterra kernel ``K_H(t, s)`` of fractional Brownian motion.

The kernel is normalised so that ``int K_H(t,r) K_H(s,r) dr = R_H(t,s)``::

    K_H(t,s) = alpha_H (t-s)^(H-1/2) F(H-1/2, 1/2-H, H+1/2, 1-t/s)

with ``alpha_H = sqrt(2H Gamma(3/2-H) / (Gamma(H+1/2) Gamma(2-2H)))``.
This module evaluates the kernel in several equivalent forms, derives the
constants ``alpha_H``, ``alpha_bar_H`` and ``C_H``, and builds the
integrated weight tables every Volterra sum in the package runs on.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Optional

import numpy as np
from scipy import integrate, special

from fbmlab.errors import DomainError, HypothesisError, NumericalError, UsageError
from fbmlab.grid import GridFunction, TimeGrid
from fbmlab.specfun import HypergeomParams, beta, gamma, hyp2f1, hyp2f1_array, rgamma

logger = logging.getLogger(__name__)

# Relative violation of K_H(C_H s^(1/2-H))(t) = t that rejects C_H.
CH_IDENTITY_TOLERANCE = 1e-2
# Slack on the boundary p H0 = 1 of the admissible exponent set.
_BOUNDARY_EPS = 1e-12
# Cells near the origin integrated by Gauss rules instead of the midpoint rule.
_REFINED_CELLS = 8
_REFINED_NODES = 8


def check_hurst(H: float) -> None:
    """Raise :class:`DomainError` unless ``0 < H < 1``."""
    if not (math.isfinite(H) and 0.0 < H < 1.0):
        raise DomainError(f"Hurst parameter must lie in (0, 1), got {H}")


@dataclass(frozen=True)
class HurstParams:
    """Hurst parameter with its derived exponents.

    Attributes:
        H: Hurst parameter in ``(0, 1)``.
        T: Time horizon.
    """

    H: float
    T: float = 1.0

    def __post_init__(self) -> None:
        check_hurst(self.H)
        if not self.T > 0.0:
            raise DomainError(f"horizon T must be positive, got {self.T}")

    @property
    def H0(self) -> float:
        return abs(self.H - 0.5)

    def admissible(self, p: float) -> bool:
        """Membership of ``p`` in ``A_H = {p >= 1 : p H0 < 1}``.

        Products within ``1e-12`` of the boundary count as on it, so
        ``H = 0.7, p = 5`` is rejected despite ``5 * 0.2 < 1`` in floats.
        """
        return p >= 1.0 and p * self.H0 < 1.0 - _BOUNDARY_EPS

    def kappa_p(self, p: float) -> float:
        """``(1 - p H0)^-1``, defined only when ``p H0 < 1``."""
        if p * self.H0 >= 1.0 - _BOUNDARY_EPS:
            raise DomainError(f"kappa_p needs p*H0 < 1, got p={p}, H0={self.H0}")
        return 1.0 / (1.0 - p * self.H0)


@dataclass(frozen=True)
class KernelConstants:
    """Constants attached to ``K_H``.

    ``alpha_bar_H = alpha_H (H - 1/2)`` is the prefactor of the integral
    representation and is only meaningful for ``H > 1/2``.
    """

    H: float
    alpha_H: float
    alpha_bar_H: float
    C_H: float


@lru_cache(maxsize=64)
def alpha_H(H: float) -> float:
    """Normalising constant of the kernel."""
    check_hurst(H)
    return math.sqrt(2.0 * H * gamma(1.5 - H) / (gamma(H + 0.5) * gamma(2.0 - 2.0 * H)))


def kernel_constants(H: float) -> KernelConstants:
    a = alpha_H(H)
    return KernelConstants(H=H, alpha_H=a, alpha_bar_H=a * (H - 0.5), C_H=constant_CH(H))


# ----------------------------------------------------------------------
# Pointwise kernel
# ----------------------------------------------------------------------


def covariance_RH(t, s, H: float):
    """fBm covariance ``(t^2H + s^2H - |t-s|^2H) / 2``; arrays broadcast."""
    check_hurst(H)
    t_arr = np.asarray(t, dtype=float)
    s_arr = np.asarray(s, dtype=float)
    if np.any(t_arr < 0.0) or np.any(s_arr < 0.0):
        raise DomainError("covariance_RH is defined for non-negative times")
    h2 = 2.0 * H
    out = 0.5 * (t_arr**h2 + s_arr**h2 - np.abs(t_arr - s_arr) ** h2)
    return float(out) if out.ndim == 0 else out


def _check_pair(t: float, s: float) -> None:
    if not (0.0 < s < t):
        raise DomainError(f"kernel requires 0 < s < t, got t={t}, s={s}")


def kernel_KH(t: float, s: float, H: float) -> float:
    """``K_H(t, s)`` from the hypergeometric representation (scalar series).

    Raises:
        DomainError: Unless ``0 < s < t`` and ``0 < H < 1``.
    """
    check_hurst(H)
    _check_pair(t, s)
    if H == 0.5:
        return 1.0
    params = HypergeomParams(H - 0.5, 0.5 - H, H + 0.5, 1.0 - t / s)
    return alpha_H(H) * (t - s) ** (H - 0.5) * hyp2f1(params)


def kernel_values(t, s, H: float) -> np.ndarray:
    """Vectorised ``K_H(t, s)`` for broadcastable arrays with ``0 < s < t``.

    For ``s < t/2`` the hypergeometric function is re-expanded around
    ``z = -inf``::

        K_H(t, s) = alpha_H t^(H-1/2) (c_H v^(H-1/2)
                    + 1/2 (1-v)^(2H-1) v^(1/2-H) F(1/2-H, 1-2H, 2-2H, -v/(1-v)))

    with ``v = s/t``, which stays accurate as ``s/t -> 0``.
    """
    check_hurst(H)
    t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
    if H == 0.5:
        return np.ones(t.shape)
    shape = t.shape
    t = t.ravel()
    s = s.ravel()
    v = s / t
    out = np.empty(v.shape)
    near = v < 0.5
    far = ~near
    out[far] = (t[far] - s[far]) ** (H - 0.5) * hyp2f1_array(
        H - 0.5, 0.5 - H, H + 0.5, 1.0 - 1.0 / v[far]
    )
    vn = v[near]
    out[near] = t[near] ** (H - 0.5) * (
        _origin_coefficient(H) * vn ** (H - 0.5)
        + 0.5
        * (1.0 - vn) ** (2.0 * H - 1.0)
        * vn ** (0.5 - H)
        * special.hyp2f1(0.5 - H, 1.0 - 2.0 * H, 2.0 - 2.0 * H, -vn / (1.0 - vn))
    )
    return alpha_H(H) * out.reshape(shape)


def kernel_KH_integral(t: float, s: float, H: float) -> float:
    """``alpha_bar_H s^(1/2-H) int_s^t r^(H-1/2) (r-s)^(H-3/2) dr`` (``H > 1/2``).

    Raises:
        HypothesisError: If ``H <= 1/2``.
    """
    check_hurst(H)
    _check_pair(t, s)
    if H <= 0.5:
        raise HypothesisError(f"the integral representation needs H > 1/2, got {H}")
    value, _ = integrate.quad(
        lambda r: r ** (H - 0.5),
        s,
        t,
        weight="alg",
        wvar=(H - 1.5, 0.0),
        epsabs=0.0,
        epsrel=1e-13,
        limit=200,
    )
    return alpha_H(H) * (H - 0.5) * s ** (0.5 - H) * value


def kernel_KH_remainder(t: float, s: float, H: float) -> float:
    """Leading power term plus integral remainder, valid for every ``H``::

        alpha_H (t-s)^(H-1/2)
          + alpha_H (1/2-H) int_s^t (r-s)^(H-3/2) (1 - (s/r)^(1/2-H)) dr
    """
    check_hurst(H)
    _check_pair(t, s)
    c = 0.5 - H
    a = alpha_H(H)
    if c == 0.0:
        return a

    def integrand(r: float) -> float:
        x = (r - s) / r
        if x <= 0.0:
            return 0.0
        # (1 - (1-x)^c) / (x r), evaluated without cancellation.
        return -math.expm1(c * math.log1p(-x)) / (x * r) * (r - s) ** (H - 0.5)

    value, _ = integrate.quad(integrand, s, t, epsabs=0.0, epsrel=1e-12, limit=400)
    return a * (t - s) ** (H - 0.5) + a * c * value


def kernel_dKdt(t: float, s: float, H: float) -> float:
    """``dK_H/dt = alpha_H (H-1/2) (s/t)^(1/2-H) (t-s)^(H-3/2)``."""
    check_hurst(H)
    _check_pair(t, s)
    return alpha_H(H) * (H - 0.5) * (s / t) ** (0.5 - H) * (t - s) ** (H - 1.5)


def kernel_power_integral(t: float, H: float, exponent: float = 0.0) -> float:
    """Closed form of ``int_0^t K_H(t, s) s^exponent ds``::

        alpha_H Gamma(H+1/2) Gamma(exponent+3/2-H)
            / (Gamma(exponent+1) (exponent+H+1/2)) * t^(H+1/2+exponent)

    At ``exponent = 1/2 - H`` the coefficient is ``1 / C_H``.

    Raises:
        DomainError: If ``s^exponent`` is not integrable against ``K_H``.
    """
    check_hurst(H)
    _check_exponent(H, exponent)
    if t <= 0.0:
        return 0.0
    coefficient = (
        alpha_H(H)
        * gamma(H + 0.5)
        * gamma(exponent + 1.5 - H)
        * rgamma(exponent + 1.0)
        / (exponent + H + 0.5)
    )
    return coefficient * t ** (H + 0.5 + exponent)


def covariance_by_quadrature(t: float, s: float, H: float) -> float:
    """``int_0^(t ^ s) K_H(t, r) K_H(s, r) dr`` by adaptive quadrature."""
    check_hurst(H)
    upper = min(t, s)
    if upper <= 0.0:
        return 0.0

    def integrand(r: float) -> float:
        return float(kernel_values(t, r, H) * kernel_values(s, r, H))

    value, _ = integrate.quad(integrand, 0.0, upper, epsabs=0.0, epsrel=1e-10, limit=500)
    return value


# ----------------------------------------------------------------------
# Weight tables
# ----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KernelWeights:
    """Integrated kernel weights on a grid.

    ``w[i, j]`` approximates ``int_{t_j}^{t_{j+1}} K_H(t_i, s) s^exponent ds``
    for ``j < i`` and is zero otherwise. Rows run over the ``n + 1`` nodes,
    columns over the ``n`` cells, so row ``0`` is identically zero.
    """

    grid: TimeGrid
    H: float
    exponent: float
    w: np.ndarray

    @property
    def n(self) -> int:
        return self.grid.n

    @cached_property
    def scaled(self) -> np.ndarray:
        """``w / dt``: the effective kernel average applied to a raw increment."""
        out = self.w / self.grid.dt
        out.setflags(write=False)
        return out

    def covariance(self, i: int, k: int) -> float:
        """Weight factorisation ``sum_j w[i,j] w[k,j] / dt`` of ``R_H(t_i, t_k)``."""
        return float(self.w[i] @ self.w[k]) / self.grid.dt


@lru_cache(maxsize=8)
def build_weights(grid: TimeGrid, H: float, exponent: float = 0.0) -> KernelWeights:
    """Kernel weight table for ``grid``.

    The kernel splits as::

        K_H(t, s) = alpha_H (t-s)^(H-1/2)                    diagonal
                  + alpha_H c_H s^(H-1/2)                     origin, exact
                  + alpha_H / 2 t^(2H-1) s^(1/2-H)            origin, leading
                  + R(t, s)

    The two origin terms are integrated against ``s^gamma`` exactly. The
    diagonal term pairs its exact cell integral with the cell average of
    ``s^gamma``. ``R`` is bounded and only mildly non-smooth, so a product
    midpoint rule handles it away from the origin and Gauss rules take the
    first cells. The kernel scaling ``K(ct, cs) = c^(H-1/2)
    K(t, s)`` lets the table be computed once on the unit grid.

    Args:
        grid: Time grid.
        H: Hurst parameter.
        exponent: Power ``gamma`` of an origin factor ``s^gamma`` carried by
            the integrand; ``0`` for plain weights.
    """
    check_hurst(H)
    _check_exponent(H, exponent)
    logger.info(
        "Building kernel weights (n=%d, T=%g, H=%g, exponent=%g)",
        grid.n,
        grid.T,
        H,
        exponent,
    )
    unit = _unit_weights(grid.n, H, exponent)
    if not (H == 0.5 and exponent == 0.0):
        unit *= grid.dt ** (H + 0.5 + exponent)
    else:
        unit *= grid.dt
    if not np.all(np.isfinite(unit)):
        raise NumericalError(f"non-finite kernel weights for H={H}, n={grid.n}")
    drift = unit[-1].sum() / kernel_power_integral(grid.T, H, exponent) - 1.0
    logger.debug("Last-row sum deviates from the closed form by %.3e", drift)
    unit.setflags(write=False)
    return KernelWeights(grid=grid, H=H, exponent=exponent, w=unit)


def effective_power(grid: TimeGrid, H: float, exponent: float) -> np.ndarray:
    """Per-cell value of ``s^exponent`` as seen through ``K_H(T, .)``.

    Pairing these values with the plain weights of the last row reproduces
    the exponent-weighted integral ``int K_H(T,s) s^exponent ds`` exactly.
    """
    plain = build_weights(grid, H).w[-1]
    powered = build_weights(grid, H, exponent).w[-1]
    return powered / plain


def apply_KH(f: GridFunction, weights: KernelWeights) -> GridFunction:
    """``(K_H f)(t_i) = sum_{j<i} w[i, j] f(midpoint_j)``.

    Exponent-weighted tables consume the smooth factor of a grid function
    carrying the same origin exponent. Given plain weights, a function with
    an origin factor ``s^gamma`` is routed through the ``gamma`` table, so
    its singular factor is integrated against the kernel rather than
    sampled at the first midpoint.

    Raises:
        UsageError: On a grid or exponent mismatch.
    """
    weights.grid.require_same(f.grid)
    if weights.exponent == 0.0 and not f.is_plain:
        weights = build_weights(weights.grid, weights.H, f.exponent)
    if weights.exponent == 0.0:
        samples = f.midpoint_values()
    elif f.exponent == weights.exponent:
        samples = f.cell_factor()
    else:
        raise UsageError(
            f"weights carry exponent {weights.exponent} but the function has {f.exponent}"
        )
    return GridFunction(f.grid, weights.w @ samples)


@lru_cache(maxsize=64)
def constant_CH(H: float) -> float:
    """Constant with ``K_H(C_H s^(1/2-H))(t) = t``.

    The closed form from the case table is divided by
    ``alpha_H Gamma(H+1/2)`` to match the normalised kernel and is then
    checked against ``int_0^1 K_H(1, s) s^(1/2-H) ds`` computed by adaptive
    quadrature of the pointwise kernel.

    Raises:
        DomainError: If ``H`` is outside ``(0, 1)``.
        NumericalError: If the closed form violates the identity.
    """
    check_hurst(H)
    if H == 0.5:
        return 1.0
    if H < 0.5:
        table = gamma(2.0 * H) * gamma(0.5 - H) * (0.5 - H) / beta(2.0 - 2.0 * H, 2.0 * H)
    else:
        table = gamma(H - 0.5) / beta(2.0 - 2.0 * H, H - 0.5)
    value = table / (alpha_H(H) * gamma(H + 0.5))

    error = _identity_violation(H, value)
    logger.debug("C_H(%g) = %.12g, identity violation %.3e", H, value, error)
    if error > CH_IDENTITY_TOLERANCE:
        raise NumericalError(
            f"C_H={value:.6g} violates K_H(C_H s^(1/2-H))(t)=t by {error:.3e} for H={H}"
        )
    return value


# ----------------------------------------------------------------------
# Check tables
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class CheckRow:
    """One line of a kernel check table."""

    t: float
    s: Optional[float]
    value: float
    reference: float

    @property
    def error(self) -> float:
        return abs(self.value - self.reference)


def identity_table(grid: TimeGrid, H: float) -> list[CheckRow]:
    """``K_H(C_H s^(1/2-H))(t_i)`` against ``t_i`` at every node.

    The image is :func:`apply_KH` on the plain weights, which integrates
    the power ``s^(1/2-H)`` against the kernel cell by cell.
    """
    f = GridFunction.power(grid, 0.5 - H, constant_CH(H))
    image = apply_KH(f, build_weights(grid, H)).node_values()
    return [
        CheckRow(float(t), None, float(v), float(t))
        for t, v in zip(grid.nodes[1:], image[1:])
    ]


def identity_midpoint_error(grid: TimeGrid, H: float) -> float:
    """Largest ``|K_H f(t_i) - t_i|`` when ``f = C_H s^(1/2-H)`` is sampled at midpoints.

    Sampling the singular power at the first midpoint costs an error of
    order ``dt^(2-2H)`` for ``H > 1/2``, which the table in
    :func:`identity_table` avoids.
    """
    samples = constant_CH(H) * grid.midpoints ** (0.5 - H)
    image = build_weights(grid, H).w @ samples
    return float(np.max(np.abs(image[1:] - grid.nodes[1:])))


def covariance_table(
    grid: TimeGrid, H: float, fractions: tuple[float, ...] = (0.5, 0.75, 1.0)
) -> list[CheckRow]:
    """Weight factorisation against ``R_H`` on pairs of probe nodes."""
    weights = build_weights(grid, H)
    index = sorted({max(1, round(fr * grid.n)) for fr in fractions})
    rows = []
    for a, i in enumerate(index):
        for k in index[a:]:
            t, s = grid.nodes[i], grid.nodes[k]
            rows.append(
                CheckRow(float(t), float(s), weights.covariance(i, k), covariance_RH(t, s, H))
            )
    return rows


def representation_table(
    H: float, T: float = 1.0, points: int = 50
) -> list[CheckRow]:
    """Hypergeometric kernel against an integral representation.

    Uses the derivative-integral form for ``H > 1/2`` and the leading-term
    plus remainder form otherwise.
    """
    reference = kernel_KH_integral if H > 0.5 else kernel_KH_remainder
    side = max(2, int(math.isqrt(points)) + 1)
    rows = []
    for t in np.linspace(0.2 * T, T, side):
        for ratio in np.linspace(0.05, 0.95, side):
            if len(rows) == points:
                return rows
            s = float(ratio * t)
            rows.append(CheckRow(float(t), s, kernel_KH(t, s, H), reference(t, s, H)))
    return rows


# ----------------------------------------------------------------------
# Internal helpers
# ----------------------------------------------------------------------


def _cell_power_integrals(n: int, exponent: float) -> np.ndarray:
    """``int_j^{j+1} u^exponent du`` for ``j = 0..n-1``."""
    edges = np.arange(n + 1, dtype=float) ** (exponent + 1.0)
    return np.diff(edges) / (exponent + 1.0)


def _leading_first_cell(n: int, H: float, exponent: float) -> np.ndarray:
    """``int_0^1 (i - u)^(H-1/2) u^exponent du`` for ``i = 1..n``."""
    out = np.empty(n)
    out[0] = beta(exponent + 1.0, H + 0.5)
    if n > 1:
        i = np.arange(2, n + 1, dtype=float)
        out[1:] = (
            i ** (H - 0.5)
            / (exponent + 1.0)
            * special.hyp2f1(0.5 - H, exponent + 1.0, exponent + 2.0, 1.0 / i)
        )
    return out


def _unit_weights(n: int, H: float, exponent: float) -> np.ndarray:
    W = np.zeros((n + 1, n))
    lower = np.tril(np.ones((n + 1, n), dtype=bool), -1)
    if H == 0.5:
        if exponent == 0.0:
            W[lower] = 1.0
        else:
            W[:] = np.where(lower, _cell_power_integrals(n, exponent)[None, :], 0.0)
        return W

    a = alpha_H(H)
    c = _origin_coefficient(H)
    hp = H + 0.5
    lag = np.arange(n, dtype=float)
    lead_cells = ((lag + 1.0) ** hp - lag**hp) / hp
    power_cells = _cell_power_integrals(n, exponent)
    origin_cells = c * _cell_power_integrals(n, H - 0.5 + exponent)
    mirror_cells = 0.5 * _cell_power_integrals(n, 0.5 - H + exponent)
    first = _leading_first_cell(n, H, exponent)
    mids = lag + 0.5
    rule_nodes, rule_weights = _origin_rule(min(n, _REFINED_CELLS), exponent)

    def remainder(i: int, u: np.ndarray) -> np.ndarray:
        return (
            kernel_values(float(i), u, H) / a
            - (i - u) ** (H - 0.5)
            - c * u ** (H - 0.5)
            - 0.5 * i ** (2.0 * H - 1.0) * u ** (0.5 - H)
        )

    for i in range(1, n + 1):
        # Product of cell averages; exact on the first cell.
        lead = lead_cells[i - 1 :: -1] * power_cells[:i]
        lead[0] = first[i - 1]
        closed = lead + origin_cells[:i] + i ** (2.0 * H - 1.0) * mirror_cells[:i]
        row = closed + remainder(i, mids[:i]) * power_cells[:i]
        k = min(i, _REFINED_CELLS)
        row[:k] = closed[:k] + (rule_weights[:k] * remainder(i, rule_nodes[:k])).sum(axis=1)
        W[i, :i] = a * row
    return W


def _check_exponent(H: float, exponent: float) -> None:
    if exponent <= abs(H - 0.5) - 1.0:
        raise DomainError(
            f"origin exponent {exponent} is not integrable against K_H for H={H}"
        )


@lru_cache(maxsize=64)
def _origin_coefficient(H: float) -> float:
    """``c_H`` of the exact ``alpha_H c_H s^(H-1/2)`` component of ``K_H(t, s)``."""
    return gamma(H + 0.5) * gamma(1.0 - 2.0 * H) * rgamma(0.5 - H)


def _origin_rule(cells: int, exponent: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for ``int_j^{j+1} g(u) u^exponent du``, ``j < cells``.

    Gauss-Jacobi absorbs ``u^exponent`` on the first cell; the other cells
    use Gauss-Legendre with the power folded into the weights.
    """
    nodes = np.empty((cells, _REFINED_NODES))
    weights = np.empty((cells, _REFINED_NODES))
    x, w = special.roots_jacobi(_REFINED_NODES, 0.0, exponent)
    nodes[0] = 0.5 * (1.0 + x)
    weights[0] = w / 2.0 ** (exponent + 1.0)
    x, w = special.roots_legendre(_REFINED_NODES)
    for j in range(1, cells):
        nodes[j] = j + 0.5 * (1.0 + x)
        weights[j] = 0.5 * w * nodes[j] ** exponent
    return nodes, weights


def _identity_violation(H: float, value: float) -> float:
    """``|value * int_0^1 K_H(1, s) s^(1/2-H) ds - 1|`` by adaptive quadrature."""

    def integrand(s: float) -> float:
        return float(kernel_values(1.0, s, H)) * s ** (0.5 - H)

    total = 0.0
    for lower, upper in ((0.0, 0.5), (0.5, 1.0)):
        part, _ = integrate.quad(integrand, lower, upper, epsabs=0.0, epsrel=1e-10, limit=200)
        total += part
    return abs(value * total - 1.0)
