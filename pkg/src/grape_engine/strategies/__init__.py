"""
Optimization strategies module.

Quasi-Newton direction strategies (steepest descent, DFP, BFGS, L-BFGS),
the strong-Wolfe line search and the optimizer loop driving them.
"""

from .line_search import LineSearchResult, StrongWolfeSearch
from .optimizer import (
    GrapeOptimizer,
    IterationRecord,
    OptimizationResult,
    OptimizationStatus,
    OptimizerState,
    initial_pulse,
    optimize,
)
from .quasi_newton import (
    bfgs_update_inverse,
    create_strategy,
    dfp_update_inverse,
    lbfgs_direction,
)

__all__ = [
    "GrapeOptimizer",
    "IterationRecord",
    "LineSearchResult",
    "OptimizationResult",
    "OptimizationStatus",
    "OptimizerState",
    "StrongWolfeSearch",
    "bfgs_update_inverse",
    "create_strategy",
    "dfp_update_inverse",
    "initial_pulse",
    "lbfgs_direction",
    "optimize",
]
