"""
Monte Carlo estimators of ``P_T f(x) = E f(X_T^x)`` and of its gradient.

Two weighted representations are implemented for additive noise:

* the Bismut weight, ``grad_y P_T f(x) = E[f(X_T) M_T]`` with
  ``M_T = sum_j sigma_j^-1 (h_j db(t_j, X_j) - u'_j) y dW_j`` and
  ``h = 1 + K_H u'`` for a control ``u'`` satisfying ``h(T) = 0``;
* the integration-by-parts (shift) weight,
  ``P_T(grad_y f)(x) = E[f(X_T) sum_j sigma_j^-1 (C_H a_j - t_j db) (y/T) dW_j]``.

Both are checked against the pathwise derivative ``E[f'(X_T) Y_T]`` and a
common-random-number finite difference. Weights use left-point values of
state-dependent factors and kernel-consistent cell values of power laws.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from fbmlab.constants import harnack_constants
from fbmlab.ensemble import Batch, SimulationSettings, map_batches
from fbmlab.errors import ConfigurationError, DomainError, HypothesisError
from fbmlab.grid import TimeGrid
from fbmlab.kernel import build_weights, constant_CH, effective_power
from fbmlab.models import CoefficientModel, TestFunction, load_table
from fbmlab.noise import wiener_block
from fbmlab.report import CheckReport
from fbmlab.solver import solve_paths, solve_variational_paths

logger = logging.getLogger(__name__)

NORMALIZATION_TOLERANCE = 1e-3
DEFAULT_FD_STEP = 1e-3


@dataclass(frozen=True)
class WeightedEstimate:
    """A Monte Carlo mean with its standard error."""

    value: float
    std_error: float
    paths: int
    weight_second_moment: float = math.nan

    @classmethod
    def from_samples(
        cls, samples: np.ndarray, weights: Optional[np.ndarray] = None
    ) -> "WeightedEstimate":
        paths = samples.shape[-1]
        second = math.nan if weights is None else float(np.mean(weights * weights))
        return cls(
            value=float(np.mean(samples)),
            std_error=float(np.std(samples, ddof=1)) / math.sqrt(paths),
            paths=paths,
            weight_second_moment=second,
        )

    def agrees_with(self, other: "WeightedEstimate", k: float = 3.0) -> bool:
        return abs(self.value - other.value) <= k * math.hypot(self.std_error, other.std_error)

    def to_dict(self) -> dict[str, float]:
        return {
            "value": self.value,
            "std_error": self.std_error,
            "paths": self.paths,
            "weight_second_moment": self.weight_second_moment,
        }


@dataclass(frozen=True, eq=False)
class ControlFunction:
    """Control ``u'`` of the Bismut weight.

    A power law ``coefficient * t^exponent`` is integrated through the
    exponent-weighted kernel tables; any other control is sampled at cell
    midpoints.
    """

    uprime: Callable[[np.ndarray], np.ndarray]
    label: str = "custom"
    coefficient: Optional[float] = None
    exponent: Optional[float] = None

    @classmethod
    def power_law(cls, coefficient: float, exponent: float, label: str = "power") -> "ControlFunction":
        return cls(
            uprime=lambda t: coefficient * np.power(t, exponent),
            label=label,
            coefficient=coefficient,
            exponent=exponent,
        )

    @classmethod
    def default(cls, H: float, T: float) -> "ControlFunction":
        """``u'(t) = -C_H / T * t^(1/2-H)``."""
        return cls.power_law(-constant_CH(H) / T, 0.5 - H, label="default")

    @classmethod
    def from_table(cls, path: str | Path) -> "ControlFunction":
        """Piecewise-linear control read from a CSV with columns ``t,uprime``."""
        t, values = load_table(path, ("t", "uprime"))
        return cls(uprime=lambda s: np.interp(s, t, values), label=f"table:{path}")

    @classmethod
    def parse(cls, spec: str, H: float, T: float) -> "ControlFunction":
        if spec == "default":
            return cls.default(H, T)
        if spec.startswith("table:"):
            return cls.from_table(spec.split(":", 1)[1])
        raise ConfigurationError(f"Unknown control '{spec}' (expected default or table:FILE)")

    @property
    def is_power_law(self) -> bool:
        return self.coefficient is not None and self.exponent is not None

    def cell_values(self, grid: TimeGrid, H: float) -> np.ndarray:
        """``u'`` on each of the ``n`` cells."""
        if self.is_power_law:
            return self.coefficient * effective_power(grid, H, self.exponent)
        return np.asarray(self.uprime(grid.midpoints), dtype=float)

    def kernel_image(self, grid: TimeGrid, H: float) -> np.ndarray:
        """``(K_H u')(t_i)`` at the ``n + 1`` nodes."""
        if self.is_power_law:
            w = build_weights(grid, H, self.exponent).w
            return self.coefficient * w.sum(axis=1)
        return build_weights(grid, H).w @ self.cell_values(grid, H)

    def normalization(self, grid: TimeGrid, H: float) -> float:
        """``1 + (K_H u')(T)``; zero for an admissible control."""
        return 1.0 + float(self.kernel_image(grid, H)[-1])


def require_normalized(
    control: ControlFunction, grid: TimeGrid, H: float, tolerance: float = NORMALIZATION_TOLERANCE
) -> None:
    residual = control.normalization(grid, H)
    logger.debug("Control %s normalisation residual %.3e", control.label, residual)
    if abs(residual) > tolerance:
        raise ConfigurationError(
            f"control {control.label} violates 1 + K_H u'(T) = 0: residual {residual:.3e} "
            f"exceeds {tolerance:g}"
        )


# ----------------------------------------------------------------------
# Public API
# ----------------------------------------------------------------------


def estimate_PTf(
    model: CoefficientModel, x0: float, f: TestFunction, settings: SimulationSettings
) -> WeightedEstimate:
    """Sample mean of ``f(X_T)``."""
    weights = settings.weights

    def batch_values(batch: Batch) -> np.ndarray:
        dW = wiener_block(settings.grid, settings.seed, batch)
        return f(solve_paths(model, x0, dW, weights)[-1])

    estimate = WeightedEstimate.from_samples(_collect(settings, batch_values))
    logger.info("P_T f(%g) = %.6g +- %.2g (%s)", x0, estimate.value, estimate.std_error, f.name)
    return estimate


def bismut_weights(
    model: CoefficientModel,
    x0: float,
    y: float,
    settings: SimulationSettings,
    control: Optional[ControlFunction] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Terminal states and Bismut weights ``(X_T, M_T)`` of every path.

    Raises:
        HypothesisError: For state-dependent ``sigma``.
        ConfigurationError: If the control is not normalised.
    """
    weight = _bismut_integrand(model, y, settings, control)
    return _weighted_terminal(model, x0, settings, weight)


def bismut_gradient(
    model: CoefficientModel,
    x0: float,
    y: float,
    f: TestFunction,
    settings: SimulationSettings,
    control: Optional[ControlFunction] = None,
) -> WeightedEstimate:
    """``grad_y P_T f(x0) = E[f(X_T) M_T]``."""
    terminal, weights = bismut_weights(model, x0, y, settings, control)
    estimate = WeightedEstimate.from_samples(f(terminal) * weights, weights)
    logger.info(
        "Bismut gradient %.6g +- %.2g, E M^2 = %.4g",
        estimate.value,
        estimate.std_error,
        estimate.weight_second_moment,
    )
    return estimate


def ibp_weights(
    model: CoefficientModel, x0: float, y: float, settings: SimulationSettings
) -> tuple[np.ndarray, np.ndarray]:
    """Terminal states and shift weights of every path."""
    return _weighted_terminal(model, x0, settings, _ibp_integrand(model, y, settings))


def ibp_shift_gradient(
    model: CoefficientModel,
    x0: float,
    y: float,
    f: TestFunction,
    settings: SimulationSettings,
) -> WeightedEstimate:
    """``P_T(grad_y f)(x0)`` through the integration-by-parts weight."""
    terminal, weights = ibp_weights(model, x0, y, settings)
    estimate = WeightedEstimate.from_samples(f(terminal) * weights, weights)
    logger.info("Shift gradient %.6g +- %.2g", estimate.value, estimate.std_error)
    return estimate


def pathwise_gradient(
    model: CoefficientModel,
    x0: float,
    y: float,
    f: TestFunction,
    settings: SimulationSettings,
) -> WeightedEstimate:
    """``E[f'(X_T) Y_T]`` with ``Y`` the derivative process along ``y``."""
    derivative = _require_derivative(f)
    weights = settings.weights

    def batch_values(batch: Batch) -> np.ndarray:
        dW = wiener_block(settings.grid, settings.seed, batch)
        X = solve_paths(model, x0, dW, weights)
        Y = solve_variational_paths(model, y, dW, weights, X)
        return derivative(X[-1]) * Y[-1]

    return WeightedEstimate.from_samples(_collect(settings, batch_values))


def finite_difference_gradient(
    model: CoefficientModel,
    x0: float,
    y: float,
    f: TestFunction,
    settings: SimulationSettings,
    eps: float = DEFAULT_FD_STEP,
) -> WeightedEstimate:
    """Central difference ``(f(X^{x0+eps y}_T) - f(X^{x0-eps y}_T)) / (2 eps)`` on common increments."""
    if eps <= 0.0:
        raise DomainError(f"finite-difference step must be positive, got {eps}")
    weights = settings.weights

    def batch_values(batch: Batch) -> np.ndarray:
        dW = wiener_block(settings.grid, settings.seed, batch)
        up = solve_paths(model, x0 + eps * y, dW, weights)[-1]
        down = solve_paths(model, x0 - eps * y, dW, weights)[-1]
        return (f(up) - f(down)) / (2.0 * eps)

    return WeightedEstimate.from_samples(_collect(settings, batch_values))


@dataclass(frozen=True)
class OracleTriangle:
    """Bismut, pathwise and finite-difference gradients on common paths."""

    bismut: WeightedEstimate
    pathwise: WeightedEstimate
    finite_difference: WeightedEstimate

    def agreement(self, k: float = 3.0) -> dict[str, bool]:
        return {
            "bismut~pathwise": self.bismut.agrees_with(self.pathwise, k),
            "bismut~finite_difference": self.bismut.agrees_with(self.finite_difference, k),
            "pathwise~finite_difference": self.pathwise.agrees_with(self.finite_difference, k),
        }

    def all_agree(self, k: float = 3.0) -> bool:
        return all(self.agreement(k).values())


def oracle_triangle(
    model: CoefficientModel,
    x0: float,
    y: float,
    f: TestFunction,
    settings: SimulationSettings,
    control: Optional[ControlFunction] = None,
    eps: float = DEFAULT_FD_STEP,
) -> OracleTriangle:
    """Three independent gradient estimates sharing one set of increments."""
    derivative = _require_derivative(f)
    integrand = _bismut_integrand(model, y, settings, control)
    weights = settings.weights

    def batch_values(batch: Batch) -> np.ndarray:
        dW = wiener_block(settings.grid, settings.seed, batch)
        X = solve_paths(model, x0, dW, weights)
        M = np.sum(integrand(X) * dW, axis=0)
        Y = solve_variational_paths(model, y, dW, weights, X)
        up = solve_paths(model, x0 + eps * y, dW, weights)[-1]
        down = solve_paths(model, x0 - eps * y, dW, weights)[-1]
        return np.stack(
            [f(X[-1]) * M, derivative(X[-1]) * Y[-1], (f(up) - f(down)) / (2.0 * eps), M]
        )

    samples = _collect(settings, batch_values)
    triangle = OracleTriangle(
        bismut=WeightedEstimate.from_samples(samples[0], samples[3]),
        pathwise=WeightedEstimate.from_samples(samples[1]),
        finite_difference=WeightedEstimate.from_samples(samples[2]),
    )
    logger.info(
        "Oracle triangle: bismut %.6g, pathwise %.6g, finite difference %.6g",
        triangle.bismut.value,
        triangle.pathwise.value,
        triangle.finite_difference.value,
    )
    return triangle


def weight_centering(
    model: CoefficientModel,
    x0: float,
    y: float,
    settings: SimulationSettings,
    control: Optional[ControlFunction] = None,
) -> WeightedEstimate:
    """Mean of the Bismut weight alone; zero up to Monte Carlo error."""
    _, weights = bismut_weights(model, x0, y, settings, control)
    return WeightedEstimate.from_samples(weights, weights)


def entropy_gradient_bound_check(
    model: CoefficientModel,
    x0: float,
    y: float,
    f: TestFunction,
    alpha: float,
    settings: SimulationSettings,
    variant: str = "shift",
    tolerance: float = 0.0,
    sigma_multiplier: float = 3.0,
) -> CheckReport:
    """Gradient controlled by entropy for positive ``f``.

    ``variant="shift"``::

        |P_T(grad_y f)| <= alpha Ent(f) + shift_base y^2 / alpha * P_T f

    ``variant="bismut"``::

        |grad_y P_T f| <= alpha Ent(f) + C_grad y^2 / alpha * P_T f

    where ``Ent(f) = P_T(f log f) - P_T f log P_T f``.

    Raises:
        DomainError: If ``f`` is not strictly positive or ``alpha <= 0``.
    """
    if not f.positive:
        raise DomainError(f"entropy bound needs strictly positive f, {f.name} has infimum {f.lower}")
    if not alpha > 0.0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if variant not in ("shift", "bismut"):
        raise DomainError(f"unknown entropy-bound variant '{variant}'")
    constants = harnack_constants(model.bounds, settings.H, settings.T)

    if variant == "bismut":
        terminal, weights = bismut_weights(model, x0, y, settings)
        gradient = f(terminal) * weights
        factor = constants.C_grad
    elif f.df is not None:
        terminal = _terminal(model, x0, settings)
        gradient = f.df(terminal) * y
        factor = constants.shift_base
    else:
        terminal, weights = ibp_weights(model, x0, y, settings)
        gradient = f(terminal) * weights
        factor = constants.shift_base

    values = f(terminal)
    lhs = WeightedEstimate.from_samples(gradient)
    mean = float(np.mean(values))
    entropy = float(np.mean(values * np.log(values))) - mean * math.log(mean)
    scale = factor * y * y / alpha
    rhs = alpha * entropy + scale * mean
    influence = alpha * (values * np.log(values) - (math.log(mean) + 1.0) * values) + scale * values
    rhs_se = float(np.std(influence, ddof=1)) / math.sqrt(values.size)

    report = CheckReport(
        name=f"entropy-gradient ({variant})",
        lhs=abs(lhs.value),
        rhs=rhs,
        lhs_se=lhs.std_error,
        rhs_se=rhs_se,
        tolerance=tolerance,
        sigma_multiplier=sigma_multiplier,
        constants={"C_grad": constants.C_grad, "shift_base": constants.shift_base, "alpha": alpha},
        details={"entropy": entropy, "P_T f": mean, "x0": x0, "y": y, "f": f.name},
    )
    logger.info(
        "Entropy-gradient bound (%s): %.6g <= %.6g -> %s",
        variant,
        report.lhs,
        report.rhs,
        report.verdict.value,
    )
    return report


# ----------------------------------------------------------------------
# Internal helpers
# ----------------------------------------------------------------------

Integrand = Callable[[np.ndarray], np.ndarray]


def _collect(settings: SimulationSettings, fn: Callable[[Batch], np.ndarray]) -> np.ndarray:
    return np.concatenate(map_batches(settings, fn), axis=-1)


def _terminal(model: CoefficientModel, x0: float, settings: SimulationSettings) -> np.ndarray:
    weights = settings.weights

    def batch_values(batch: Batch) -> np.ndarray:
        return solve_paths(model, x0, wiener_block(settings.grid, settings.seed, batch), weights)[-1]

    return _collect(settings, batch_values)


def _weighted_terminal(
    model: CoefficientModel, x0: float, settings: SimulationSettings, integrand: Integrand
) -> tuple[np.ndarray, np.ndarray]:
    weights = settings.weights

    def batch_values(batch: Batch) -> np.ndarray:
        dW = wiener_block(settings.grid, settings.seed, batch)
        X = solve_paths(model, x0, dW, weights)
        return np.stack([X[-1], np.sum(integrand(X) * dW, axis=0)])

    samples = _collect(settings, batch_values)
    return samples[0], samples[1]


def _require_additive(model: CoefficientModel) -> None:
    if not model.additive:
        raise HypothesisError(
            f"weighted gradient formulas need additive noise; model {model.name} is multiplicative"
        )


def _require_derivative(f: TestFunction) -> Callable[[np.ndarray], np.ndarray]:
    if f.df is None:
        raise DomainError(f"test function {f.name} has no derivative")
    return f.df


def _drift_derivative(model: CoefficientModel, nodes: np.ndarray, X: np.ndarray) -> np.ndarray:
    out = np.empty((nodes.size - 1, X.shape[1]))
    for j, t in enumerate(nodes[:-1]):
        out[j] = model.db(t, X[j])
    return out


def _inverse_sigma(model: CoefficientModel, grid: TimeGrid) -> np.ndarray:
    return np.array([1.0 / model.sigma_at(t) for t in grid.nodes[:-1]])


def _bismut_integrand(
    model: CoefficientModel,
    y: float,
    settings: SimulationSettings,
    control: Optional[ControlFunction],
) -> Integrand:
    _require_additive(model)
    grid = settings.grid
    control = control or ControlFunction.default(settings.H, settings.T)
    require_normalized(control, grid, settings.H)
    h = 1.0 + control.kernel_image(grid, settings.H)[:-1]
    ubar = control.cell_values(grid, settings.H)
    inv_sigma = _inverse_sigma(model, grid)

    def integrand(X: np.ndarray) -> np.ndarray:
        db = _drift_derivative(model, grid.nodes, X)
        return (h[:, None] * db - ubar[:, None]) * inv_sigma[:, None] * y

    return integrand


def _ibp_integrand(model: CoefficientModel, y: float, settings: SimulationSettings) -> Integrand:
    _require_additive(model)
    grid = settings.grid
    H = settings.H
    a = constant_CH(H) * effective_power(grid, H, 0.5 - H)
    t = grid.nodes[:-1]
    inv_sigma = _inverse_sigma(model, grid)

    def integrand(X: np.ndarray) -> np.ndarray:
        db = _drift_derivative(model, grid.nodes, X)
        return (a[:, None] - t[:, None] * db) * inv_sigma[:, None] * (y / grid.T)

    return integrand
