"""
Core numerical components.

Spin-system construction, the matrix exponential kernel, piecewise-constant
propagation and gradient assembly.
"""

from .gradient import GradientReport, gradient, gradient_and_fidelity_fused
from .propagation import (
    ControlProblem,
    PulseSequence,
    TrajectoryCache,
    fidelity,
    propagate,
    step_propagator,
)

__all__ = [
    "ControlProblem",
    "GradientReport",
    "PulseSequence",
    "TrajectoryCache",
    "fidelity",
    "gradient",
    "gradient_and_fidelity_fused",
    "propagate",
    "step_propagator",
]
