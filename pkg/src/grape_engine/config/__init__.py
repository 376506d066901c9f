"""
Configuration management module.

Contains the pydantic configuration models for problem files, kernels and
optimizers, plus the structlog setup shared by every entry point.
"""

from .log_setup import configure_logging
from .settings import (
    Algorithm,
    DerivativeMethod,
    EngineSettings,
    ExpmOptions,
    FdStepPolicy,
    GradientMethod,
    OptimizerConfig,
    ProblemFile,
    SpinChainSpec,
    load_problem_file,
)

__all__ = [
    "Algorithm",
    "DerivativeMethod",
    "EngineSettings",
    "ExpmOptions",
    "FdStepPolicy",
    "GradientMethod",
    "OptimizerConfig",
    "ProblemFile",
    "SpinChainSpec",
    "configure_logging",
    "load_problem_file",
]
