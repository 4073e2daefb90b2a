"""
Transportation-cost checks for the law of the solution on path space.

A drift shift ``u`` turns the reference equation into a coupled pair:
``X`` carries the extra drift ``sigma(t, X) u(t)``, ``Y`` does not, and both
run on the same increments. The synchronous coupling distance bounds the
squared Wasserstein distance from above and Girsanov gives the relative
entropy ``1/2 E sum u_j^2 dt``, so

    E d(X, Y)^2 <= 2 C H(Q|P)

is checked with ``C = alpha(T,H)`` for the uniform metric and
``C = beta(T,H)`` for the ``L2`` metric. The module also checks the
maximal inequality for Volterra stochastic integrals.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from fbmlab.constants import (
    TransportConstants,
    default_theta,
    maximal_constant,
    maximal_constant_scaled,
    transport_constants,
)
from fbmlab.ensemble import Batch, SimulationSettings, map_batches
from fbmlab.errors import ConfigurationError, DomainError, HypothesisError, UsageError
from fbmlab.grid import TimeGrid
from fbmlab.kernel import KernelWeights
from fbmlab.models import CoefficientModel, load_table
from fbmlab.noise import WienerIncrements, wiener_block
from fbmlab.report import CheckReport, Table
from fbmlab.solver import SolutionPath, solve_paths

logger = logging.getLogger(__name__)

METRICS = ("uniform", "l2")

AdaptedShift = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class DriftShift:
    """A shift ``u(t)`` of the driving noise.

    Deterministic shifts are functions of time sampled at cell midpoints.
    Adapted shifts depend on the current state of the shifted path and
    are evaluated at the left point of each cell.
    """

    label: str
    u: Optional[Callable[[np.ndarray], np.ndarray]] = None
    adapted: Optional[AdaptedShift] = None

    def __post_init__(self) -> None:
        if (self.u is None) == (self.adapted is None):
            raise UsageError("a drift shift is either deterministic or adapted")

    @classmethod
    def constant(cls, value: float) -> "DriftShift":
        return cls(f"const:{value:g}", u=lambda t: np.full_like(np.asarray(t, dtype=float), value))

    @classmethod
    def linear(cls, slope: float) -> "DriftShift":
        return cls(f"linear:{slope:g}", u=lambda t: slope * np.asarray(t, dtype=float))

    @classmethod
    def from_table(cls, path: str | Path) -> "DriftShift":
        """Piecewise-linear shift read from a CSV with columns ``t,u``."""
        t, values = load_table(path, ("t", "u"))
        return cls(f"table:{path}", u=lambda s: np.interp(s, t, values))

    @classmethod
    def feedback(cls, gain: float) -> "DriftShift":
        """Adapted shift ``u(t, x) = gain * cos(x)``."""
        return cls(f"feedback:{gain:g}", adapted=lambda t, x: gain * np.cos(x))

    @classmethod
    def parse(cls, spec: str) -> "DriftShift":
        """``const:VAL``, ``linear:VAL``, ``table:FILE`` or ``feedback:VAL``."""
        kind, _, rest = spec.partition(":")
        kind = kind.strip().lower()
        if kind == "table" and rest:
            return cls.from_table(rest)
        builders = {"const": cls.constant, "linear": cls.linear, "feedback": cls.feedback}
        if kind in builders:
            try:
                value = float(rest)
            except ValueError as exc:
                raise ConfigurationError(f"Invalid number in shift '{spec}'") from exc
            return builders[kind](value)
        raise ConfigurationError(
            f"Unknown shift '{spec}' (expected const:VAL, linear:VAL, table:FILE or feedback:VAL)"
        )

    @property
    def is_deterministic(self) -> bool:
        return self.u is not None

    def values(self, grid: TimeGrid) -> np.ndarray:
        """Deterministic shift on the ``n`` cells."""
        if self.u is None:
            raise UsageError(f"shift {self.label} is adapted and has no deterministic values")
        return np.asarray(self.u(grid.midpoints), dtype=float)


def relative_entropy(
    shift: DriftShift, grid: TimeGrid, states: Optional[np.ndarray] = None
) -> float:
    """``1/2 E sum_j u_j^2 dt``.

    Exact for a deterministic shift. An adapted shift is averaged over the
    shifted paths ``states`` of shape ``(n + 1, P)``.
    """
    return float(np.mean(_entropy_samples(shift, grid, states)))


@dataclass(frozen=True)
class CoupledBlock:
    """Shifted paths ``X``, reference paths ``Y`` and the shift applied on each cell."""

    X: np.ndarray
    Y: np.ndarray
    u: np.ndarray


def coupled_block(
    model: CoefficientModel,
    x0: float,
    shift: DriftShift,
    dW: np.ndarray,
    weights: KernelWeights,
) -> CoupledBlock:
    """Synchronous coupling on a ``(n, P)`` increment block."""
    grid = weights.grid
    applied = np.zeros(dW.shape)
    deterministic = shift.values(grid) if shift.is_deterministic else None

    def extra(j: int, t: float, x: np.ndarray) -> np.ndarray:
        u = deterministic[j] if deterministic is not None else shift.adapted(t, x)
        applied[j] = u
        return model.sigma(t, x) * u

    X = solve_paths(model, x0, dW, weights, extra_drift=extra)
    Y = solve_paths(model, x0, dW, weights)
    return CoupledBlock(X=X, Y=Y, u=applied)


def coupled_paths(
    model: CoefficientModel,
    x0: float,
    shift: DriftShift,
    dW: WienerIncrements,
    weights: KernelWeights,
) -> tuple[SolutionPath, SolutionPath]:
    """Shifted and reference solutions of one path on identical increments."""
    weights.grid.require_same(dW.grid)
    block = coupled_block(model, x0, shift, dW.dW[:, None], weights)
    return (
        SolutionPath(grid=dW.grid, x0=x0, X=block.X[:, 0]),
        SolutionPath(grid=dW.grid, x0=x0, X=block.Y[:, 0]),
    )


def coupling_distance(difference: np.ndarray, grid: TimeGrid, metric: str) -> np.ndarray:
    """Squared path distance per column of ``X - Y``: ``max_i d_i^2`` or ``sum_i d_i^2 dt``."""
    _require_metric(metric)
    squares = difference[1:] ** 2
    if metric == "uniform":
        return squares.max(axis=0)
    return squares.sum(axis=0) * grid.dt


def check_T2(
    model: CoefficientModel,
    x0: float,
    shift: DriftShift,
    metric: str,
    settings: SimulationSettings,
    theta: Optional[float] = None,
    sigma_multiplier: float = 3.0,
) -> CheckReport:
    """Monte Carlo ``E d(X, Y)^2 <= 2 C H(Q|P)`` on the synchronous coupling.

    Raises:
        HypothesisError: If ``H <= 1/2``.
        DomainError: On an unknown metric.
    """
    _require_metric(metric)
    _require_long_memory(settings.H)
    constants = transport_constants(model.bounds, settings.H, settings.T, theta)
    grid = settings.grid
    weights = settings.weights

    def batch_values(batch: Batch) -> np.ndarray:
        dW = wiener_block(grid, settings.seed, batch)
        block = coupled_block(model, x0, shift, dW, weights)
        difference = block.X - block.Y
        return np.stack(
            [
                coupling_distance(difference, grid, "uniform"),
                coupling_distance(difference, grid, "l2"),
                0.5 * np.sum(block.u**2, axis=0) * grid.dt,
            ]
        )

    samples = np.concatenate(map_batches(settings, batch_values), axis=1)
    distance = samples[0] if metric == "uniform" else samples[1]
    entropy = samples[2]
    constant = _metric_constant(constants, metric)
    report = CheckReport(
        name=f"T2 ({metric})",
        lhs=float(np.mean(distance)),
        rhs=2.0 * constant * float(np.mean(entropy)),
        lhs_se=_se(distance),
        rhs_se=0.0 if shift.is_deterministic else 2.0 * constant * _se(entropy),
        sigma_multiplier=sigma_multiplier,
        constants=_constants_dict(constants),
        details={
            "shift": shift.label,
            "entropy": float(np.mean(entropy)),
            "uniform_distance": float(np.mean(samples[0])),
            "l2_distance": float(np.mean(samples[1])),
            "x0": x0,
        },
        requirements={"l2 <= T * uniform": bool(np.all(samples[1] <= grid.T * samples[0] * (1.0 + 1e-12)))},
    )
    _log(report)
    return report


def exact_T2_check(
    model: CoefficientModel, shift: DriftShift, metric: str, settings: SimulationSettings,
    theta: Optional[float] = None,
) -> CheckReport:
    """Deterministic T2 check for a drift-free additive model and a deterministic shift.

    The noise cancels in ``X - Y``, leaving ``d_i = sum_j w[i,j] sigma_j u_j``.
    """
    _require_metric(metric)
    _require_long_memory(settings.H)
    if not (model.zero_drift and model.additive and shift.is_deterministic):
        raise UsageError("the exact T2 check needs b = 0, additive noise and a deterministic shift")
    constants = transport_constants(model.bounds, settings.H, settings.T, theta)
    grid = settings.grid
    u = shift.values(grid)
    sigma = np.array([model.sigma_at(t) for t in grid.nodes[:-1]])
    difference = settings.weights.w @ (sigma * u)
    entropy = 0.5 * float(np.sum(u * u)) * grid.dt
    distance = float(coupling_distance(difference[:, None], grid, metric)[0])
    report = CheckReport(
        name=f"exact T2 ({metric})",
        lhs=distance,
        rhs=2.0 * _metric_constant(constants, metric) * entropy,
        exact=True,
        constants=_constants_dict(constants),
        details={"shift": shift.label, "entropy": entropy},
    )
    _log(report)
    return report


@dataclass(frozen=True, eq=False)
class MaximalIntegrand:
    """Deterministic integrand ``phi(t)`` of the maximal inequality."""

    label: str
    phi: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def parse(cls, spec: str) -> "MaximalIntegrand":
        """``const:VAL``, ``linear`` (``phi(t) = t``) or ``linear:VAL``."""
        kind, _, rest = spec.partition(":")
        kind = kind.strip().lower()
        try:
            value = float(rest) if rest else 1.0
        except ValueError as exc:
            raise ConfigurationError(f"Invalid number in integrand '{spec}'") from exc
        if kind == "const" and rest:
            return cls(spec, lambda t: np.full_like(np.asarray(t, dtype=float), value))
        if kind == "linear":
            return cls(spec, lambda t: value * np.asarray(t, dtype=float))
        raise ConfigurationError(f"Unknown integrand '{spec}' (expected const:VAL or linear)")


def check_maximal_inequality(
    phi: MaximalIntegrand,
    p: float,
    settings: SimulationSettings,
    theta: Optional[float] = None,
    sigma_multiplier: float = 3.0,
) -> CheckReport:
    """``E sup_t |int_0^t K_H(t,s) phi(s) dW_s|^p <= C(p) int_0^T |phi|^p dt``.

    Raises:
        HypothesisError: If ``H <= 1/2``.
        DomainError: If ``p < 2`` or ``theta`` is inadmissible.
    """
    _require_long_memory(settings.H)
    H, T = settings.H, settings.T
    theta = default_theta(H) if theta is None else theta
    constant = maximal_constant(p, H, T, theta)
    grid = settings.grid
    values = np.asarray(phi.phi(grid.nodes[:-1]), dtype=float)
    scaled = settings.weights.scaled

    def batch_values(batch: Batch) -> np.ndarray:
        dW = wiener_block(grid, settings.seed, batch)
        integral = scaled @ (values[:, None] * dW)
        return np.max(np.abs(integral), axis=0) ** p

    sup = np.concatenate(map_batches(settings, batch_values))
    moment = float(np.sum(np.abs(values) ** p)) * grid.dt
    report = CheckReport(
        name=f"maximal inequality (p={p:g})",
        lhs=float(np.mean(sup)),
        rhs=constant * moment,
        lhs_se=_se(sup),
        sigma_multiplier=sigma_multiplier,
        constants={
            "C_p": constant,
            "C_p_scaled": maximal_constant_scaled(p, H, T, theta),
            "theta": theta,
        },
        details={"phi": phi.label, "p": p, "phi_moment": moment},
    )
    _log(report)
    return report


def distance_table(
    model: CoefficientModel,
    x0: float,
    shift: DriftShift,
    settings: SimulationSettings,
) -> Table:
    """Mean coupling gap ``E|X_t - Y_t|^2`` at every node."""
    weights = settings.weights

    def batch_values(batch: Batch) -> np.ndarray:
        block = coupled_block(model, x0, shift, wiener_block(settings.grid, settings.seed, batch), weights)
        return (block.X - block.Y) ** 2

    gaps = np.concatenate(map_batches(settings, batch_values), axis=1)
    table = Table(["t", "mean_squared_gap"])
    for t, value in zip(settings.grid.nodes, gaps.mean(axis=1)):
        table.add(float(t), float(value))
    return table


# ----------------------------------------------------------------------
# Internal helpers
# ----------------------------------------------------------------------


def _entropy_samples(
    shift: DriftShift, grid: TimeGrid, states: Optional[np.ndarray]
) -> np.ndarray:
    if shift.is_deterministic:
        u = shift.values(grid)
        return np.array([0.5 * float(np.sum(u * u)) * grid.dt])
    if states is None:
        raise UsageError(f"adapted shift {shift.label} needs the shifted paths for its entropy")
    u = np.stack([shift.adapted(t, states[j]) for j, t in enumerate(grid.nodes[:-1])])
    return 0.5 * np.sum(u * u, axis=0) * grid.dt


def _metric_constant(constants: TransportConstants, metric: str) -> float:
    return constants.alpha_TH if metric == "uniform" else constants.beta_TH


def _constants_dict(constants: TransportConstants) -> dict[str, float]:
    return {
        "alpha_TH": constants.alpha_TH,
        "beta_TH": constants.beta_TH,
        "C2": constants.C2,
        "theta": constants.theta,
    }


def _require_metric(metric: str) -> None:
    if metric not in METRICS:
        raise DomainError(f"unknown metric '{metric}', expected one of {METRICS}")


def _require_long_memory(H: float) -> None:
    if H <= 0.5:
        raise HypothesisError(
            f"transportation inequalities are only established for H > 1/2, got H={H}"
        )


def _se(samples: np.ndarray) -> float:
    return float(np.std(samples, ddof=1)) / math.sqrt(samples.size)


def _log(report: CheckReport) -> None:
    level = logging.INFO if report.passed else logging.WARNING
    logger.log(
        level,
        "%s: lhs=%.6g rhs=%.6g -> %s",
        report.name,
        report.lhs,
        report.rhs,
        report.verdict.value,
    )
