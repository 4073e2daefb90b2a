"""
Seeded Wiener increments, fBm synthesis through the Volterra
representation ``B_t = int K_H(t,s) dW_s``, and an exact Cholesky oracle.

Random numbers come from :class:`numpy.random.Philox` keyed by the seed,
with the stream and path index placed in the high words of the counter.
Each ``(seed, stream, path_index)`` therefore owns a disjoint block of the
counter space and can be regenerated independently of any other path.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg, stats

from fbmlab.ensemble import Batch, SimulationSettings, map_batches
from fbmlab.errors import DomainError, NumericalError, UsageError
from fbmlab.grid import TimeGrid
from fbmlab.kernel import KernelWeights, check_hurst, covariance_RH

logger = logging.getLogger(__name__)

STREAM_WIENER = 0
STREAM_ORACLE = 1

MAX_CHOLESKY_NODES = 2048
_JITTER_ATTEMPTS = 6


@dataclass(frozen=True, eq=False)
class WienerIncrements:
    """``n`` Brownian increments ``dW[j] ~ Normal(0, dt)`` of one path."""

    grid: TimeGrid
    dW: np.ndarray
    seed: int
    path_index: int


@dataclass(frozen=True, eq=False)
class FbmPath:
    """fBm values at the ``n + 1`` grid nodes, ``values[0] == 0``."""

    grid: TimeGrid
    values: np.ndarray


def generator(seed: int, path_index: int, stream: int = STREAM_WIENER) -> np.random.Generator:
    """Counter-based generator owning the ``(seed, stream, path_index)`` stream."""
    if seed < 0 or path_index < 0 or stream < 0:
        raise DomainError(
            f"seed, stream and path index must be non-negative, got ({seed}, {stream}, {path_index})"
        )
    return np.random.Generator(
        np.random.Philox(key=int(seed), counter=[0, 0, int(stream), int(path_index)])
    )


def sample_wiener(
    grid: TimeGrid, seed: int, path_index: int, stream: int = STREAM_WIENER
) -> WienerIncrements:
    """Brownian increments of path ``path_index``; identical on every call."""
    dW = generator(seed, path_index, stream).standard_normal(grid.n) * math.sqrt(grid.dt)
    dW.setflags(write=False)
    return WienerIncrements(grid=grid, dW=dW, seed=seed, path_index=path_index)


def wiener_block(
    grid: TimeGrid, seed: int, batch: Batch, stream: int = STREAM_WIENER
) -> np.ndarray:
    """Increments of paths ``batch.start ...`` as a time-major ``(n, count)`` array."""
    out = np.empty((grid.n, batch.count))
    scale = math.sqrt(grid.dt)
    for k in range(batch.count):
        out[:, k] = generator(seed, batch.start + k, stream).standard_normal(grid.n)
    out *= scale
    return out


def fbm_from_wiener(dW: WienerIncrements, weights: KernelWeights) -> FbmPath:
    """``B[i] = sum_{j<i} (w[i,j] / dt) dW[j]``.

    Raises:
        UsageError: If the increments and weights live on different grids.
    """
    _require_plain(weights)
    weights.grid.require_same(dW.grid)
    return FbmPath(grid=dW.grid, values=weights.scaled @ dW.dW)


def fbm_block(weights: KernelWeights, dW: np.ndarray) -> np.ndarray:
    """Volterra synthesis of a ``(n, P)`` increment block into ``(n + 1, P)`` paths."""
    _require_plain(weights)
    return weights.scaled @ dW


def fbm_cholesky_oracle(grid: TimeGrid, H: float, seed: int, path_index: int) -> FbmPath:
    """Exact Gaussian sample with covariance ``R_H(t_i, t_k)``.

    Raises:
        UsageError: If the grid has more than :data:`MAX_CHOLESKY_NODES` cells.
        NumericalError: If the covariance cannot be factorised.
    """
    factor = _cholesky_factor(grid, H)
    z = generator(seed, path_index, STREAM_ORACLE).standard_normal(grid.n)
    values = np.zeros(grid.node_count)
    values[1:] = factor @ z
    return FbmPath(grid=grid, values=values)


def oracle_block(grid: TimeGrid, H: float, seed: int, batch: Batch) -> np.ndarray:
    """Cholesky samples for a batch as a ``(n + 1, count)`` array."""
    factor = _cholesky_factor(grid, H)
    z = np.empty((grid.n, batch.count))
    for k in range(batch.count):
        z[:, k] = generator(seed, batch.start + k, STREAM_ORACLE).standard_normal(grid.n)
    out = np.zeros((grid.node_count, batch.count))
    out[1:] = factor @ z
    return out


@dataclass(frozen=True)
class CovarianceProbe:
    """Empirical against exact covariance at one pair of nodes."""

    t: float
    s: float
    empirical: float
    reference: float
    std_error: float

    @property
    def error(self) -> float:
        return abs(self.empirical - self.reference)

    @property
    def margin_se(self) -> float:
        if self.std_error == 0.0:
            return 0.0 if self.error == 0.0 else math.inf
        return self.error / self.std_error


def default_probe_pairs(grid: TimeGrid) -> list[tuple[int, int]]:
    """Eight node pairs spread over the grid, diagonal and off-diagonal."""
    q = [max(1, round(fr * grid.n)) for fr in (0.25, 0.5, 0.75, 1.0)]
    return [(q[0], q[0]), (q[1], q[1]), (q[2], q[2]), (q[3], q[3]),
            (q[0], q[1]), (q[1], q[3]), (q[2], q[3]), (q[0], q[3])]


def validate_covariance(
    settings: SimulationSettings,
    pairs: list[tuple[int, int]] | None = None,
    oracle: bool = False,
) -> list[CovarianceProbe]:
    """Monte Carlo covariance of synthesised fBm against ``R_H``.

    Args:
        settings: Ensemble settings.
        pairs: Node index pairs; defaults to :func:`default_probe_pairs`.
        oracle: Sample with the Cholesky oracle instead of the Volterra sum.
    """
    grid = settings.grid
    pairs = pairs or default_probe_pairs(grid)
    rows = np.array([i for i, _ in pairs])
    cols = np.array([k for _, k in pairs])

    def products(batch: Batch) -> np.ndarray:
        if oracle:
            paths = oracle_block(grid, settings.H, settings.seed, batch)
        else:
            paths = fbm_block(settings.weights, wiener_block(grid, settings.seed, batch))
        return paths[rows] * paths[cols]

    samples = np.concatenate(map_batches(settings, products), axis=1)
    mean = samples.mean(axis=1)
    se = samples.std(axis=1, ddof=1) / math.sqrt(settings.paths)
    return [
        CovarianceProbe(
            t=float(grid.nodes[i]),
            s=float(grid.nodes[k]),
            empirical=float(mean[m]),
            reference=covariance_RH(grid.nodes[i], grid.nodes[k], settings.H),
            std_error=float(se[m]),
        )
        for m, (i, k) in enumerate(pairs)
    ]


@dataclass(frozen=True)
class LawComparison:
    """Two-sample Kolmogorov-Smirnov comparison of ``B_T`` samples."""

    statistic: float
    pvalue: float
    paths: int


def compare_terminal_law(settings: SimulationSettings) -> LawComparison:
    """Volterra-synthesised ``B_T`` against the Cholesky oracle on independent streams."""
    grid = settings.grid

    def terminal_pairs(batch: Batch) -> np.ndarray:
        volterra = fbm_block(settings.weights, wiener_block(grid, settings.seed, batch))[-1]
        exact = oracle_block(grid, settings.H, settings.seed, batch)[-1]
        return np.stack([volterra, exact])

    samples = np.concatenate(map_batches(settings, terminal_pairs), axis=1)
    result = stats.ks_2samp(samples[0], samples[1])
    logger.info("KS comparison of B_T: statistic %.4g, p-value %.4g", result.statistic, result.pvalue)
    return LawComparison(
        statistic=float(result.statistic), pvalue=float(result.pvalue), paths=settings.paths
    )


# ----------------------------------------------------------------------
# Internal helpers
# ----------------------------------------------------------------------


def _require_plain(weights: KernelWeights) -> None:
    if weights.exponent != 0.0:
        raise UsageError("fBm synthesis needs plain (exponent 0) kernel weights")


@lru_cache(maxsize=4)
def _cholesky_factor(grid: TimeGrid, H: float) -> np.ndarray:
    check_hurst(H)
    if grid.n > MAX_CHOLESKY_NODES:
        raise UsageError(
            f"Cholesky oracle is limited to n <= {MAX_CHOLESKY_NODES}, got {grid.n}"
        )
    t = grid.nodes[1:]
    cov = covariance_RH(t[:, None], t[None, :], H)
    logger.info("Factorising %dx%d fBm covariance (H=%g)", grid.n, grid.n, H)

    jitter = 0.0
    base = 1e-12 * float(np.mean(np.diag(cov)))
    for attempt in range(_JITTER_ATTEMPTS):
        try:
            factor = linalg.cholesky(cov + jitter * np.eye(grid.n), lower=True)
        except linalg.LinAlgError:
            jitter = base if jitter == 0.0 else 10.0 * jitter
            logger.warning(
                "Covariance not positive definite (attempt %d), retrying with jitter %.3e",
                attempt + 1,
                jitter,
            )
            continue
        factor.setflags(write=False)
        return factor
    raise NumericalError(
        f"Cholesky factorisation failed after {_JITTER_ATTEMPTS} attempts "
        f"(last jitter {jitter:.3e}, H={H}, n={grid.n})"
    )
