"""
Uniform time grids and functions sampled on them.

A :class:`GridFunction` stores ``f(s) = s**exponent * g(s)`` through the
smooth factor ``g``. Keeping the power factor symbolic lets the fractional
operators and kernel tables integrate the origin singularity exactly
instead of sampling it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from fbmlab.errors import DomainError, UsageError


def _readonly(values: np.ndarray) -> np.ndarray:
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition ``t_i = i * T / n`` of ``[0, T]`` with ``n + 1`` nodes."""

    T: float
    n: int

    def __post_init__(self) -> None:
        if not math.isfinite(self.T) or self.T <= 0.0:
            raise DomainError(f"horizon T must be positive and finite, got {self.T}")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"grid needs n >= 1 cells, got {self.n}")

    @property
    def dt(self) -> float:
        return self.T / self.n

    @property
    def node_count(self) -> int:
        return self.n + 1

    @cached_property
    def nodes(self) -> np.ndarray:
        return _readonly(np.arange(self.n + 1, dtype=float) * self.dt)

    @cached_property
    def midpoints(self) -> np.ndarray:
        return _readonly((np.arange(self.n, dtype=float) + 0.5) * self.dt)

    def require_same(self, other: "TimeGrid") -> None:
        """Raise :class:`UsageError` unless ``other`` is the same grid."""
        if self != other:
            raise UsageError(
                f"grid mismatch: (T={self.T}, n={self.n}) vs (T={other.T}, n={other.n})"
            )


@dataclass(frozen=True, eq=False)
class GridFunction:
    """A function ``f(s) = s**exponent * g(s)`` known on a :class:`TimeGrid`.

    Attributes:
        grid: The grid the values live on.
        values: ``g`` at the ``n + 1`` nodes; ``values[0]`` is ``g(0)``.
        exponent: Power of the origin factor, ``> -1`` for integrability.
        cells: Optional ``g`` at the ``n`` cell midpoints. When absent the
            midpoint value is the average of the two adjacent nodes.
    """

    grid: TimeGrid
    values: np.ndarray
    exponent: float = 0.0
    cells: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.node_count,):
            raise UsageError(
                f"expected {self.grid.node_count} node values, got shape {values.shape}"
            )
        if not math.isfinite(values[0]):
            raise DomainError("values[0] must be finite")
        if self.exponent <= -1.0:
            raise DomainError(
                f"origin exponent must exceed -1 for integrability, got {self.exponent}"
            )
        object.__setattr__(self, "values", _readonly(values))
        if self.cells is not None:
            cells = np.array(self.cells, dtype=float)
            if cells.shape != (self.grid.n,):
                raise UsageError(
                    f"expected {self.grid.n} cell values, got shape {cells.shape}"
                )
            object.__setattr__(self, "cells", _readonly(cells))

    # ------------------------------------------------------------------
    # Constructors
    # ------------------------------------------------------------------

    @classmethod
    def from_callable(
        cls,
        grid: TimeGrid,
        func: Callable[[np.ndarray], np.ndarray],
        exponent: float = 0.0,
    ) -> "GridFunction":
        """Sample the smooth factor ``g = func`` at nodes and midpoints."""
        nodes = func(grid.nodes)
        mids = func(grid.midpoints)
        return cls(
            grid,
            np.broadcast_to(np.asarray(nodes, dtype=float), grid.nodes.shape),
            exponent,
            np.broadcast_to(np.asarray(mids, dtype=float), grid.midpoints.shape),
        )

    @classmethod
    def constant(cls, grid: TimeGrid, value: float) -> "GridFunction":
        return cls(grid, np.full(grid.node_count, float(value)))

    @classmethod
    def power(cls, grid: TimeGrid, exponent: float, scale: float = 1.0) -> "GridFunction":
        """``scale * s**exponent``, exact at every node and midpoint."""
        return cls(
            grid,
            np.full(grid.node_count, float(scale)),
            exponent,
            np.full(grid.n, float(scale)),
        )

    # ------------------------------------------------------------------
    # Public API
    # ------------------------------------------------------------------

    @property
    def is_plain(self) -> bool:
        return self.exponent == 0.0

    def node_values(self) -> np.ndarray:
        """``f`` at the nodes.

        The origin node takes the right limit where it is finite
        (``g(0)`` for exponent ``0``, ``0`` for positive exponents) and is
        excluded with value ``0`` where ``f`` is singular.
        """
        if self.is_plain:
            return np.array(self.values)
        out = np.empty(self.grid.node_count)
        out[0] = 0.0
        out[1:] = self.grid.nodes[1:] ** self.exponent * self.values[1:]
        return out

    def cell_factor(self) -> np.ndarray:
        """The smooth factor ``g`` at the cell midpoints."""
        if self.cells is not None:
            return np.array(self.cells)
        return 0.5 * (self.values[:-1] + self.values[1:])

    def midpoint_values(self) -> np.ndarray:
        """``f`` at the cell midpoints."""
        factor = self.cell_factor()
        if self.is_plain:
            return factor
        return self.grid.midpoints**self.exponent * factor

    def times_power(self, power: float) -> "GridFunction":
        """Multiply by ``s**power``; only the tracked exponent changes."""
        return GridFunction(self.grid, self.values, self.exponent + power, self.cells)

    def scaled(self, factor: float) -> "GridFunction":
        cells = None if self.cells is None else factor * self.cells
        return GridFunction(self.grid, factor * self.values, self.exponent, cells)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        self.grid.require_same(other.grid)
        if self.exponent != other.exponent:
            raise UsageError(
                f"cannot add grid functions with exponents {self.exponent} and {other.exponent}"
            )
        if self.cells is None and other.cells is None:
            cells = None
        else:
            cells = self.cell_factor() + other.cell_factor()
        return GridFunction(self.grid, self.values + other.values, self.exponent, cells)
