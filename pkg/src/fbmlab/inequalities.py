"""
Verification harness for the pointwise inequalities of ``P_T``.

Every check samples both sides on common random numbers and returns a
:class:`~fbmlab.report.CheckReport`. When the two sides are built from
the identical sample (``x == y`` or a zero shift) the comparison reduces
to Jensen's inequality on the empirical measure and is reported as exact.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from fbmlab.constants import harnack_constants
from fbmlab.ensemble import Batch, SimulationSettings, map_batches
from fbmlab.errors import DomainError, HypothesisError
from fbmlab.malliavin import (
    WeightedEstimate,
    bismut_gradient,
    finite_difference_gradient,
    pathwise_gradient,
)
from fbmlab.models import CoefficientModel, TestFunction
from fbmlab.noise import wiener_block
from fbmlab.report import CheckReport, Table
from fbmlab.solver import solve_paths

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-2
DEFAULT_RADII = (0.5, 0.25, 0.1, 0.05, 0.01, 0.001, 0.0001)
HERMITE_NODES = 64


# ----------------------------------------------------------------------
# Public API
# ----------------------------------------------------------------------


def check_gradient_bound(
    model: CoefficientModel,
    x0: float,
    y: float,
    f: TestFunction,
    settings: SimulationSettings,
    tolerance: float = DEFAULT_TOLERANCE,
    sigma_multiplier: float = 3.0,
) -> CheckReport:
    """``|grad_y P_T f(x)|^2 <= C_grad |y|^2 P_T f^2(x)``.

    The gradient comes from the Bismut weight for additive noise, from the
    pathwise derivative when ``f'`` is known, and from a finite difference
    otherwise.
    """
    constants = harnack_constants(model.bounds, settings.H, settings.T)
    if model.additive:
        source, gradient = "bismut", bismut_gradient(model, x0, y, f, settings)
    elif f.df is not None:
        source, gradient = "pathwise", pathwise_gradient(model, x0, y, f, settings)
    else:
        source, gradient = "finite-difference", finite_difference_gradient(model, x0, y, f, settings)

    squares = f(_terminal(model, x0, settings)) ** 2
    second = WeightedEstimate.from_samples(squares)
    scale = constants.C_grad * y * y
    report = CheckReport(
        name="gradient bound",
        lhs=gradient.value**2,
        rhs=scale * second.value,
        lhs_se=2.0 * abs(gradient.value) * gradient.std_error,
        rhs_se=scale * second.std_error,
        tolerance=tolerance,
        sigma_multiplier=sigma_multiplier,
        constants={"C_grad": constants.C_grad},
        details={"gradient": gradient.to_dict(), "source": source, "x0": x0, "y": y, "f": f.name},
    )
    _log(report)
    return report


def check_harnack(
    model: CoefficientModel,
    x: float,
    y: float,
    f: TestFunction,
    p: float,
    settings: SimulationSettings,
    tolerance: float = DEFAULT_TOLERANCE,
    sigma_multiplier: float = 3.0,
) -> CheckReport:
    """``(P_T f(x))^p <= P_T f^p(y) exp[p/(p-1) C_grad |x-y|^2]``.

    Raises:
        DomainError: If ``p <= 1`` or ``f`` takes negative values.
    """
    _require_power(p)
    if not f.nonnegative:
        raise DomainError(f"Harnack inequality needs f >= 0, {f.name} has infimum {f.lower}")
    constants = harnack_constants(model.bounds, settings.H, settings.T)
    at_x, at_y = _terminal_pair(model, x, y, settings)
    fx, fy = f(at_x), f(at_y)

    factor = math.exp(constants.harnack_exponent(p, x - y))
    mean = float(np.mean(fx))
    powered = WeightedEstimate.from_samples(fy**p)
    exact = x == y
    report = CheckReport(
        name=f"harnack (p={p:g})",
        lhs=mean**p,
        rhs=powered.value * factor,
        lhs_se=0.0 if exact else p * abs(mean) ** (p - 1.0) * _se(fx),
        rhs_se=0.0 if exact else powered.std_error * factor,
        tolerance=tolerance,
        sigma_multiplier=sigma_multiplier,
        exact=exact,
        constants={"C_grad": constants.C_grad, "exp_factor": factor},
        details={"x": x, "y": y, "p": p, "f": f.name},
    )
    _log(report)
    return report


def check_log_harnack(
    model: CoefficientModel,
    x: float,
    y: float,
    f: TestFunction,
    settings: SimulationSettings,
    tolerance: float = DEFAULT_TOLERANCE,
    sigma_multiplier: float = 3.0,
) -> CheckReport:
    """``P_T log f(x) <= log P_T f(y) + C_grad |x-y|^2``.

    Raises:
        DomainError: If ``f`` is not bounded away from zero.
    """
    _require_positive(f)
    constants = harnack_constants(model.bounds, settings.H, settings.T)
    at_x, at_y = _terminal_pair(model, x, y, settings)
    logs = np.log(f(at_x))
    fy = f(at_y)
    mean_y = float(np.mean(fy))
    exact = x == y
    report = CheckReport(
        name="log-harnack",
        lhs=float(np.mean(logs)),
        rhs=math.log(mean_y) + constants.C_grad * (x - y) ** 2,
        lhs_se=0.0 if exact else _se(logs),
        rhs_se=0.0 if exact else _se(fy) / mean_y,
        tolerance=tolerance,
        sigma_multiplier=sigma_multiplier,
        exact=exact,
        constants={"C_grad": constants.C_grad},
        details={"x": x, "y": y, "f": f.name},
    )
    _log(report)
    return report


def check_shift_harnack(
    model: CoefficientModel,
    x0: float,
    y: float,
    f: TestFunction,
    p: float,
    settings: SimulationSettings,
    log: bool = False,
    tolerance: float = DEFAULT_TOLERANCE,
    sigma_multiplier: float = 3.0,
) -> CheckReport:
    """Shift Harnack ``(P_T f)^p <= P_T f(y + .)^p exp[C_shift(p) y^2]``.

    With ``log=True`` the shift log-Harnack inequality
    ``P_T log f <= log P_T f(y + .) + shift_base y^2`` is checked instead
    and ``p`` is ignored. Both sides use the same terminal sample, the
    right-hand side evaluated at the shifted argument. For a drift-free
    model and a smooth ``f`` the Gaussian closed forms of both sides are
    attached and must match the Monte Carlo values.

    Raises:
        HypothesisError: For state-dependent ``sigma``.
        DomainError: For invalid ``p`` or a test function of the wrong sign.
    """
    if not model.additive:
        raise HypothesisError("shift Harnack inequalities need additive noise")
    if log:
        _require_positive(f)
    else:
        _require_power(p)
        if not f.nonnegative:
            raise DomainError(f"shift Harnack needs f >= 0, {f.name} has infimum {f.lower}")
    constants = harnack_constants(model.bounds, settings.H, settings.T)
    terminal = _terminal(model, x0, settings)
    base, moved = f(terminal), f(terminal + y)
    exact = y == 0.0
    oracle: Optional[dict[str, float]] = None

    if log:
        logs = np.log(base)
        mean_moved = float(np.mean(moved))
        lhs, rhs = float(np.mean(logs)), math.log(mean_moved) + constants.shift_base * y * y
        lhs_se, rhs_se = _se(logs), _se(moved) / mean_moved
        name = "shift log-harnack"
        coefficients = {"shift_base": constants.shift_base}
        if model.zero_drift and f.df is not None:
            std = gaussian_terminal_std(model, settings)
            oracle = {
                "lhs": gaussian_expectation(lambda z: np.log(f(z)), x0, std),
                "rhs": math.log(gaussian_expectation(f.shifted(y), x0, std))
                + constants.shift_base * y * y,
            }
    else:
        factor = math.exp(constants.C_shift(p) * y * y)
        mean = float(np.mean(base))
        powered = moved**p
        lhs, rhs = mean**p, float(np.mean(powered)) * factor
        lhs_se, rhs_se = p * abs(mean) ** (p - 1.0) * _se(base), _se(powered) * factor
        name = f"shift harnack (p={p:g})"
        coefficients = {"C_shift": constants.C_shift(p), "exp_factor": factor}
        if model.zero_drift and f.df is not None:
            std = gaussian_terminal_std(model, settings)
            shifted = f.shifted(y)
            oracle = {
                "lhs": gaussian_expectation(f, x0, std) ** p,
                "rhs": gaussian_expectation(lambda z: shifted(z) ** p, x0, std) * factor,
            }

    details: dict[str, object] = {"x0": x0, "y": y, "f": f.name}
    requirements: dict[str, bool] = {}
    if oracle is not None:
        details["oracle"] = oracle
        k = sigma_multiplier + 1.0
        requirements["lhs matches gaussian oracle"] = abs(lhs - oracle["lhs"]) <= k * lhs_se + 1e-9
        requirements["rhs matches gaussian oracle"] = abs(rhs - oracle["rhs"]) <= k * rhs_se + 1e-9
    report = CheckReport(
        name=name,
        lhs=lhs,
        rhs=rhs,
        lhs_se=0.0 if exact else lhs_se,
        rhs_se=0.0 if exact else rhs_se,
        tolerance=tolerance,
        sigma_multiplier=sigma_multiplier,
        exact=exact,
        constants=coefficients,
        details=details,
        requirements=requirements,
    )
    _log(report)
    return report


def gaussian_expectation(
    g: Callable[[np.ndarray], np.ndarray], mean: float, std: float, nodes: int = HERMITE_NODES
) -> float:
    """``E g(mean + std Z)`` for standard normal ``Z`` by Gauss-Hermite quadrature."""
    z, w = np.polynomial.hermite_e.hermegauss(nodes)
    return float(np.sum(w * g(mean + std * z)) / math.sqrt(2.0 * math.pi))


def gaussian_terminal_std(model: CoefficientModel, settings: SimulationSettings) -> float:
    """Standard deviation ``|sigma| T^H`` of ``X_T`` for a drift-free constant-sigma model."""
    if not (model.zero_drift and model.additive):
        raise DomainError(f"model {model.name} has no Gaussian closed form")
    return abs(model.sigma_at(0.0)) * settings.T**settings.H


def probe_strong_feller(
    model: CoefficientModel,
    x0: float,
    f: TestFunction,
    settings: SimulationSettings,
    radii: Sequence[float] = DEFAULT_RADII,
    sigma_multiplier: float = 3.0,
) -> CheckReport:
    """Continuity probe ``r -> |P_T f(x0 + r) - P_T f(x0)|``.

    Differences are taken path by path on common increments. The probe
    passes when the difference at the smallest radius is within
    ``sigma_multiplier`` standard errors of zero and the sequence does not
    increase by more than that slack as ``r`` shrinks.
    """
    if not radii:
        raise DomainError("strong Feller probe needs at least one radius")
    order = sorted((float(r) for r in radii), key=abs, reverse=True)
    weights = settings.weights

    def batch_values(batch: Batch) -> np.ndarray:
        dW = wiener_block(settings.grid, settings.seed, batch)
        base = f(solve_paths(model, x0, dW, weights)[-1])
        return np.stack([f(solve_paths(model, x0 + r, dW, weights)[-1]) - base for r in order])

    samples = np.concatenate(map_batches(settings, batch_values), axis=1)
    means = np.abs(samples.mean(axis=1))
    errors = samples.std(axis=1, ddof=1) / math.sqrt(settings.paths)
    rows = [
        {"r": r, "difference": float(d), "std_error": float(s)}
        for r, d, s in zip(order, means, errors)
    ]
    monotone = all(
        means[k] <= means[k - 1] + sigma_multiplier * math.hypot(errors[k], errors[k - 1])
        for k in range(1, len(order))
    )
    report = CheckReport(
        name="strong feller",
        lhs=float(means[-1]),
        rhs=0.0,
        lhs_se=float(errors[-1]),
        sigma_multiplier=sigma_multiplier,
        exact=bool(errors[-1] == 0.0),
        details={"x0": x0, "f": f.name, "rows": rows},
        requirements={"non-increasing": monotone},
    )
    _log(report)
    return report


def feller_table(report: CheckReport) -> Table:
    """CSV-ready rows of a strong Feller probe."""
    table = Table(["r", "difference", "std_error"])
    for row in report.details["rows"]:
        table.add(row["r"], row["difference"], row["std_error"])
    return table


@dataclass(frozen=True)
class DensityDiagnostic:
    """Histogram of ``X_T`` and its roughness.

    ``roughness`` is the mean squared second difference of the density
    relative to its mean square; small values indicate a smooth density.
    """

    edges: np.ndarray
    density: np.ndarray
    roughness: float

    def to_table(self) -> Table:
        table = Table(["left", "right", "density"])
        for left, right, value in zip(self.edges[:-1], self.edges[1:], self.density):
            table.add(float(left), float(right), float(value))
        return table


def density_smoothness_diagnostic(
    model: CoefficientModel, x0: float, settings: SimulationSettings, bins: int = 50
) -> DensityDiagnostic:
    """Histogram-based look at the density of ``X_T``. Produces no verdict."""
    if bins < 3:
        raise DomainError(f"density diagnostic needs at least 3 bins, got {bins}")
    terminal = _terminal(model, x0, settings)
    density, edges = np.histogram(terminal, bins=bins, density=True)
    curvature = np.diff(density, n=2)
    scale = float(np.mean(density**2))
    roughness = float(np.mean(curvature**2)) / scale if scale > 0.0 else math.inf
    logger.info("Density roughness of X_T: %.4g over %d bins", roughness, bins)
    return DensityDiagnostic(edges=edges, density=density, roughness=roughness)


# ----------------------------------------------------------------------
# Internal helpers
# ----------------------------------------------------------------------


def _terminal(model: CoefficientModel, x0: float, settings: SimulationSettings) -> np.ndarray:
    weights = settings.weights

    def batch_values(batch: Batch) -> np.ndarray:
        dW = wiener_block(settings.grid, settings.seed, batch)
        return solve_paths(model, x0, dW, weights)[-1]

    return np.concatenate(map_batches(settings, batch_values))


def _terminal_pair(
    model: CoefficientModel, x: float, y: float, settings: SimulationSettings
) -> tuple[np.ndarray, np.ndarray]:
    at_x = _terminal(model, x, settings)
    return at_x, (at_x if x == y else _terminal(model, y, settings))


def _se(samples: np.ndarray) -> float:
    return float(np.std(samples, ddof=1)) / math.sqrt(samples.size)


def _require_power(p: float) -> None:
    if not p > 1.0:
        raise DomainError(f"Harnack exponent p must exceed 1, got {p}")


def _require_positive(f: TestFunction) -> None:
    if not f.positive:
        raise DomainError(f"log inequalities need f bounded away from 0, {f.name} has infimum {f.lower}")


def _log(report: CheckReport) -> None:
    level = logging.INFO if report.passed else logging.WARNING
    logger.log(
        level,
        "%s: lhs=%.6g rhs=%.6g margin=%.3g SE -> %s",
        report.name,
        report.lhs,
        report.rhs,
        report.margin_se,
        report.verdict.value,
    )
