"""Exception types shared across the package."""

from __future__ import annotations


class TomographyError(Exception):
    """Base class for all tomoplan errors."""


class ValidationError(TomographyError, ValueError):
    """An input object violates a structural requirement (Hermiticity,
    trace, positivity, completeness, physicality)."""


class SingularityError(TomographyError, ArithmeticError):
    """A statistical or linear-algebraic singularity makes the requested
    quantity undefined (zero probability with positive weight, singular
    Fisher matrix, rank-deficient measurement map)."""


class MinimalityError(TomographyError, ValueError):
    """An operation that requires minimal tomography (independent outcomes
    exactly matching the parameter count) was given a setup that is not
    minimal, or a binary-only operation was given a non-binary setup."""


class DivergentAverageError(TomographyError, ArithmeticError):
    """The state-space average of 1/p diverges for some outcome because the
    outcome probability vanishes inside the averaging ball."""


class DegenerateDesignError(TomographyError, ArithmeticError):
    """A closed-form design formula produced a negative radicand, so no
    valid weight can be assigned."""


class ConvergenceError(TomographyError, RuntimeError):
    """An iterative optimization failed to reach its tolerance.

    Carries the best iterate found so that callers can inspect or reuse it.
    """

    def __init__(self, message: str, best=None, residual: float | None = None):
        super().__init__(message)
        self.best = best
        self.residual = residual
