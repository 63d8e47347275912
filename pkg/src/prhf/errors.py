"""Exception types shared across the package."""

from __future__ import annotations


class PreconditionError(ValueError):
    """A documented precondition was violated before any computation started."""


class RankError(ValueError):
    """An orbital set is numerically linearly dependent."""

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


class ConvergenceError(RuntimeError):
    """An iterative solver ran out of iterations; carries the best residuals seen."""

    def __init__(self, message: str, residuals=None, values=None):
        super().__init__(message)
        self.residuals = residuals
        self.values = values


class ResolutionError(ValueError):
    """The grid is too coarse for the requested construction."""
