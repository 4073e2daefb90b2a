"""
Monte Carlo ensemble settings and deterministic parallel batching.

Paths are split into contiguous batches that a thread pool processes
concurrently. Results come back in batch order, and every path draws from
its own counter-based random stream, so the concatenated output is
bitwise identical whatever the worker count.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Callable, NamedTuple, Optional, TypeVar

from fbmlab.errors import ConfigurationError
from fbmlab.grid import TimeGrid
from fbmlab.kernel import KernelWeights, build_weights, check_hurst

logger = logging.getLogger(__name__)

THREADS_ENV = "FBMLAB_THREADS"
MIN_PATHS = 100
_DEFAULT_MAX_WORKERS = 8

R = TypeVar("R")


class Batch(NamedTuple):
    """A contiguous range ``[start, start + count)`` of path indices."""

    start: int
    count: int


@dataclass(frozen=True)
class SimulationSettings:
    """Grid, ensemble size and seed shared by every Monte Carlo estimator."""

    H: float
    T: float = 1.0
    n: int = 512
    paths: int = 100_000
    seed: int = 42
    batch_size: int = 8192
    threads: Optional[int] = None

    def __post_init__(self) -> None:
        check_hurst(self.H)
        if self.n < 2:
            raise ConfigurationError(f"n must be at least 2, got {self.n}")
        if self.paths < MIN_PATHS:
            raise ConfigurationError(f"paths must be at least {MIN_PATHS}, got {self.paths}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigurationError(f"seed must be a non-negative integer, got {self.seed}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be positive, got {self.batch_size}")
        if self.threads is not None and self.threads < 1:
            raise ConfigurationError(f"threads must be positive, got {self.threads}")

    @cached_property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.T, self.n)

    @property
    def weights(self) -> KernelWeights:
        return build_weights(self.grid, self.H)

    def batches(self) -> list[Batch]:
        return [
            Batch(start, min(self.batch_size, self.paths - start))
            for start in range(0, self.paths, self.batch_size)
        ]

    def evolve(self, **changes) -> "SimulationSettings":
        return replace(self, **changes)


def worker_count(requested: Optional[int] = None) -> int:
    """Number of pool workers, capped by ``FBMLAB_THREADS`` when set."""
    workers = requested or min(os.cpu_count() or 1, _DEFAULT_MAX_WORKERS)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            workers = min(workers, max(1, int(cap)))
        except ValueError as exc:
            raise ConfigurationError(
                f"{THREADS_ENV} must be a positive integer, got {cap!r}"
            ) from exc
    return workers


def map_batches(settings: SimulationSettings, fn: Callable[[Batch], R]) -> list[R]:
    """Apply ``fn`` to every batch and return the results in batch order."""
    batches = settings.batches()
    workers = min(worker_count(settings.threads), len(batches))
    logger.debug(
        "Running %d paths in %d batches on %d workers",
        settings.paths,
        len(batches),
        workers,
    )
    if workers <= 1:
        return [fn(batch) for batch in batches]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, batches))
