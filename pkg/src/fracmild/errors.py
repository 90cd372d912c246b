"""Exception types raised across the package."""

from __future__ import annotations

from typing import Any, Sequence


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class AccuracyError(ArithmeticError):
    """A series or quadrature failed to reach its requested tolerance."""

    def __init__(self, message: str, partial: Any = None, terms: int | None = None) -> None:
        super().__init__(message)
        self.partial = partial
        self.terms = terms


class EvaluationError(RuntimeError):
    """A user-supplied function returned a non-finite value."""

    def __init__(self, message: str, node: Any = None) -> None:
        super().__init__(message)
        self.node = node


class ConditioningError(ArithmeticError):
    """A matrix is singular or indefinite to working tolerance."""


class ConvergenceError(RuntimeError):
    """An iteration or series did not settle within its budget.

    ``history`` holds the per-step diagnostic (term norms, residuals, ...).
    """

    def __init__(self, message: str, history: Sequence[float] = ()) -> None:
        super().__init__(message)
        self.history = list(history)


class RangeError(OverflowError):
    """A value does not fit in double precision even in log space."""


class NotFoundError(LookupError):
    """A search exhausted its cap without finding an admissible index."""

    def __init__(self, message: str, trace: Sequence[float] = ()) -> None:
        super().__init__(message)
        self.trace = list(trace)


class ConfigError(ValueError):
    """A run configuration is malformed or names unknown keys."""
