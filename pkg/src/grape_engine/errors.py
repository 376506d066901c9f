"""
Exception hierarchy for the pulse engine.
"""

from typing import Any, Dict, Optional


class GrapeEngineError(Exception):
    """Base class for every error raised by the engine."""


class CapacityError(GrapeEngineError):
    """Requested system exceeds the dense-matrix capacity limit."""

    def __init__(self, dimension: int, limit: int):
        super().__init__(
            f"Hilbert dimension {dimension} exceeds the dense limit of {limit}"
        )
        self.dimension = dimension
        self.limit = limit


class DimensionMismatchError(GrapeEngineError, ValueError):
    """Matrix or vector dimensions are inconsistent."""


class SeriesDivergenceError(GrapeEngineError):
    """A Taylor or commutator series did not converge within its term budget."""

    def __init__(self, what: str, terms: int, residual_norm: float):
        super().__init__(
            f"{what} series did not converge after {terms} terms "
            f"(residual norm {residual_norm:.3e})"
        )
        self.terms = terms
        self.residual_norm = residual_norm


class InfeasibleThresholdError(GrapeEngineError, ValueError):
    """Finite-difference error threshold lies below the round-off floor."""


class InvalidMethodError(GrapeEngineError, ValueError):
    """Gradient method cannot be used for this problem."""


class NonFiniteObjectiveError(GrapeEngineError):
    """Objective or gradient became NaN/Inf during optimization."""

    def __init__(self, message: str, state: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.state = state or {}


class ProblemFileError(GrapeEngineError):
    """Problem file could not be parsed or validated."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        location = ""
        if field:
            location += f" [field: {field}]"
        if line is not None:
            location += f" [line {line}]"
        super().__init__(f"{message}{location}")
        self.field = field
        self.line = line


class LineSearchWarning(RuntimeWarning):
    """Strong-Wolfe search ran out of evaluations; best-seen step returned."""
