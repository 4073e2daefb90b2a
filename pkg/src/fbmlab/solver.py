"""
Euler-type scheme for the Volterra SDE

    X_t = x0 + int_0^t K_H(t,s) b(s, X_s) ds + int_0^t K_H(t,s) sigma(s, X_s) dW_s

and its variational equation. Coefficients are evaluated at the left
point of every cell (adapted scheme) and every node re-sums its full
weight row. Ensembles are solved time-major: arrays have shape
``(n + 1, paths)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from fbmlab.ensemble import Batch, SimulationSettings, map_batches
from fbmlab.errors import DomainError, PropagationError, UsageError
from fbmlab.grid import TimeGrid
from fbmlab.kernel import KernelWeights
from fbmlab.models import CoefficientModel
from fbmlab.noise import WienerIncrements, wiener_block

logger = logging.getLogger(__name__)

# (step j, t_j, X_j) -> additional drift on cell j.
ExtraDrift = Callable[[int, float, np.ndarray], np.ndarray]

SHIFT_MODES = ("terminal-linear",)


@dataclass(frozen=True, eq=False)
class SolutionPath:
    """A solved path: ``X[0] == x0`` and ``n + 1`` finite node values."""

    grid: TimeGrid
    x0: float
    X: np.ndarray


def solve_paths(
    model: CoefficientModel,
    x0: float,
    dW: np.ndarray,
    weights: KernelWeights,
    extra_drift: Optional[ExtraDrift] = None,
) -> np.ndarray:
    """Solve a block of paths driven by time-major increments ``dW`` of shape ``(n, P)``.

    Returns:
        ``(n + 1, P)`` array of states.

    Raises:
        PropagationError: If a state becomes non-finite; ``step`` names the node.
    """
    _require_plain(weights)
    grid = weights.grid
    n = grid.n
    if dW.shape[0] != n:
        raise UsageError(f"expected {n} increments per path, got {dW.shape[0]}")
    paths = dW.shape[1]
    nodes = grid.nodes
    w = weights.w
    scaled = weights.scaled

    X = np.empty((n + 1, paths))
    X[0] = x0
    drift = np.empty((n, paths))
    if model.additive:
        sig = np.array([model.sigma_at(t) for t in nodes[:-1]])
        stochastic = scaled @ (sig[:, None] * dW)
        noise = None
    else:
        stochastic = None
        noise = np.empty((n, paths))

    for i in range(1, n + 1):
        j = i - 1
        t = nodes[j]
        drift[j] = model.b(t, X[j])
        if extra_drift is not None:
            drift[j] = drift[j] + extra_drift(j, t, X[j])
        if noise is not None:
            noise[j] = model.sigma(t, X[j]) * dW[j]
            X[i] = x0 + w[i, :i] @ drift[:i] + scaled[i, :i] @ noise[:i]
        else:
            X[i] = x0 + w[i, :i] @ drift[:i] + stochastic[i]
        if not np.all(np.isfinite(X[i])):
            raise PropagationError(
                f"non-finite state at step {i} (t={nodes[i]:g}) for model {model.name}",
                step=i,
            )
    return X


def solve_volterra(
    model: CoefficientModel, x0: float, dW: WienerIncrements, weights: KernelWeights
) -> SolutionPath:
    """Solve one path of the Volterra SDE on the increments ``dW``."""
    weights.grid.require_same(dW.grid)
    X = solve_paths(model, x0, dW.dW[:, None], weights)[:, 0]
    return SolutionPath(grid=dW.grid, x0=x0, X=X)


def solve_variational_paths(
    model: CoefficientModel,
    y: float,
    dW: np.ndarray,
    weights: KernelWeights,
    X: np.ndarray,
) -> np.ndarray:
    """Derivative process along a solved block ``X``::

        Y[i] = y + sum_{j<i} w[i,j] db(t_j, X_j) Y_j
                 + sum_{j<i} (w[i,j]/dt) dsigma(t_j, X_j) Y_j dW_j
    """
    _require_plain(weights)
    grid = weights.grid
    n = grid.n
    if X.shape[0] != n + 1 or dW.shape != (n, X.shape[1]):
        raise UsageError("variational solve needs the base block and its increments")
    nodes = grid.nodes
    w = weights.w
    scaled = weights.scaled

    Y = np.empty_like(X)
    Y[0] = y
    drift = np.empty((n, X.shape[1]))
    noise = None if model.additive else np.empty((n, X.shape[1]))
    for i in range(1, n + 1):
        j = i - 1
        t = nodes[j]
        drift[j] = model.db(t, X[j]) * Y[j]
        Y[i] = y + w[i, :i] @ drift[:i]
        if noise is not None:
            noise[j] = model.dsigma(t, X[j]) * Y[j] * dW[j]
            Y[i] += scaled[i, :i] @ noise[:i]
        if not np.all(np.isfinite(Y[i])):
            raise PropagationError(f"non-finite derivative at step {i}", step=i)
    return Y


def solve_variational(
    model: CoefficientModel,
    x0: float,
    y: float,
    dW: WienerIncrements,
    weights: KernelWeights,
    base_path: SolutionPath,
) -> SolutionPath:
    """Derivative of the solution in the initial condition along ``y``."""
    weights.grid.require_same(dW.grid)
    base_path.grid.require_same(dW.grid)
    if base_path.x0 != x0:
        raise UsageError(f"base path starts at {base_path.x0}, not {x0}")
    Y = solve_variational_paths(model, y, dW.dW[:, None], weights, base_path.X[:, None])
    return SolutionPath(grid=dW.grid, x0=y, X=Y[:, 0])


def solve_shifted(
    model: CoefficientModel,
    x0: float,
    dW: WienerIncrements,
    weights: KernelWeights,
    shift: float,
    mode: str = "terminal-linear",
) -> SolutionPath:
    """Coupled additive-noise path ``X_t + (t/T) shift``.

    Raises:
        UsageError: For state-dependent ``sigma`` or an unknown ``mode``.
    """
    if not model.additive:
        raise UsageError("shifted paths are only defined for additive noise")
    if mode not in SHIFT_MODES:
        raise UsageError(f"unknown shift mode '{mode}', expected one of {SHIFT_MODES}")
    base = solve_volterra(model, x0, dW, weights)
    grid = base.grid
    return SolutionPath(grid=grid, x0=x0, X=base.X + grid.nodes / grid.T * shift)


def deterministic_volterra(
    model: CoefficientModel, x0: float, weights: KernelWeights
) -> np.ndarray:
    """Noise-free solution ``m(t) = x0 + int K_H(t,s) b(s, m(s)) ds`` on the grid."""
    return solve_paths(model, x0, np.zeros((weights.grid.n, 1)), weights)[:, 0]


def euler_maruyama(
    model: CoefficientModel, x0: float, dW: np.ndarray, grid: TimeGrid
) -> np.ndarray:
    """Classical recursion ``X_{i+1} = X_i + b dt + sigma dW_i`` for ``dW`` of shape ``(n,)`` or ``(n, P)``."""
    X = np.empty((grid.n + 1,) + dW.shape[1:])
    X[0] = x0
    for i, t in enumerate(grid.nodes[:-1]):
        X[i + 1] = X[i] + model.b(t, X[i]) * grid.dt + model.sigma(t, X[i]) * dW[i]
    return X


@dataclass(frozen=True)
class MomentProfile:
    """Monte Carlo ``E|X_t|^2`` at every node with standard errors."""

    second_moment: np.ndarray
    std_error: np.ndarray

    @property
    def sup(self) -> float:
        return float(np.max(self.second_moment))


def second_moment_profile(
    model: CoefficientModel, x0: float, settings: SimulationSettings
) -> MomentProfile:
    """``E|X_{t_i}|^2`` on the grid of ``settings``."""
    weights = settings.weights

    def batch_moments(batch: Batch) -> np.ndarray:
        dW = wiener_block(settings.grid, settings.seed, batch)
        return solve_paths(model, x0, dW, weights) ** 2

    squares = np.concatenate(map_batches(settings, batch_moments), axis=1)
    return MomentProfile(
        second_moment=squares.mean(axis=1),
        std_error=squares.std(axis=1, ddof=1) / math.sqrt(settings.paths),
    )


def initial_condition_lipschitz(
    model: CoefficientModel, x: float, y: float, settings: SimulationSettings
) -> float:
    """``sup_t E|X^x_t - X^y_t|^2 / |x - y|^2`` with common increments.

    Raises:
        DomainError: If ``x == y``.
    """
    if x == y:
        raise DomainError("initial-condition ratio needs distinct starting points")
    weights = settings.weights

    def batch_gaps(batch: Batch) -> np.ndarray:
        dW = wiener_block(settings.grid, settings.seed, batch)
        return (solve_paths(model, x, dW, weights) - solve_paths(model, y, dW, weights)) ** 2

    gaps = np.concatenate(map_batches(settings, batch_gaps), axis=1)
    return float(np.max(gaps.mean(axis=1))) / (x - y) ** 2


# ----------------------------------------------------------------------
# Internal helpers
# ----------------------------------------------------------------------


def _require_plain(weights: KernelWeights) -> None:
    if weights.exponent != 0.0:
        raise UsageError("the solver needs plain (exponent 0) kernel weights")
