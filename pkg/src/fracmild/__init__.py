"""Mild solutions of Caputo time-fractional non-autonomous integro-differential
evolution equations, with an audit of the existence conditions."""

from __future__ import annotations

from fracmild.errors import (
    AccuracyError, ConditioningError, ConfigError, ConvergenceError, DomainError,
    EvaluationError, NotFoundError, RangeError)
from fracmild.mild_solver import ProblemSpec, SolverConfig, solve_picard, solve_reference

__version__ = "0.1.0"

__all__ = [
    "AccuracyError", "ConditioningError", "ConfigError", "ConvergenceError", "DomainError",
    "EvaluationError", "NotFoundError", "ProblemSpec", "RangeError", "SolverConfig",
    "solve_picard", "solve_reference",
]
