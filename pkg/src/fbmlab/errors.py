"""
Exception hierarchy for fbm-lab.

Every error raised on purpose by the library derives from
:class:`FbmLabError`. Domain and configuration problems are also
``ValueError`` subclasses so callers that only know the builtin types
keep working.
"""

from __future__ import annotations

from typing import Optional


class FbmLabError(Exception):
    """Base class for all fbm-lab errors."""


class DomainError(FbmLabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class HypothesisError(DomainError):
    """An operation was called outside the hypotheses of the result it checks."""


class ConfigurationError(FbmLabError, ValueError):
    """An experiment configuration or a user-supplied table is invalid."""


class UsageError(FbmLabError, ValueError):
    """Objects were combined incorrectly (e.g. two different grids)."""


class NumericalError(FbmLabError, ArithmeticError):
    """A numerical procedure failed (factorisation, non-convergence)."""


class PropagationError(NumericalError):
    """A simulated state became non-finite.

    Attributes:
        step: Grid index of the first non-finite state.
    """

    def __init__(self, message: str, step: Optional[int] = None) -> None:
        super().__init__(message)
        self.step = step
