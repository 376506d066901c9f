"""
Quasi-Newton Search Strategies

Inverse-Hessian update rules and the direction strategies built on them.
Everything is stated for minimization of f = 1 − fidelity, so the inverse
Hessian approximations are positive definite and an update pair (s, y)
is admissible only when sᵀy > 0.
"""

from abc import ABC, abstractmethod
from collections import deque
from typing import Any, Deque, Dict, Optional, Sequence, Tuple

import numpy as np
import structlog

from grape_engine.config.settings import Algorithm, OptimizerConfig

log = structlog.get_logger(__name__)

Pair = Tuple[np.ndarray, np.ndarray]


def curvature(s: np.ndarray, y: np.ndarray) -> float:
    return float(np.dot(s, y))


def dfp_update_inverse(h_inv: np.ndarray, s: np.ndarray, y: np.ndarray) -> np.ndarray:
    """
    Davidon-Fletcher-Powell inverse update.

    H⁻¹ + ssᵀ/(yᵀs) − (H⁻¹y)(H⁻¹y)ᵀ/(yᵀH⁻¹y)

    Args:
        h_inv: Current inverse Hessian (symmetric positive definite)
        s: Step x_{k+1} − x_k
        y: Gradient change ∇f(x_{k+1}) − ∇f(x_k)

    Returns:
        Updated inverse Hessian, or h_inv unchanged when sᵀy ≤ 0
    """
    sy = curvature(s, y)
    if sy <= 0:
        return h_inv
    hy = h_inv @ y
    updated = h_inv + np.outer(s, s) / sy - np.outer(hy, hy) / float(y @ hy)
    return 0.5 * (updated + updated.T)


def bfgs_update_inverse(h_inv: np.ndarray, s: np.ndarray, y: np.ndarray) -> np.ndarray:
    """
    Broyden-Fletcher-Goldfarb-Shanno inverse update.

    (E − ρ·s·yᵀ)·H⁻¹·(E − ρ·y·sᵀ) + ρ·s·sᵀ with ρ = 1/(yᵀs)

    Args:
        h_inv: Current inverse Hessian (symmetric positive definite)
        s: Step x_{k+1} − x_k
        y: Gradient change ∇f(x_{k+1}) − ∇f(x_k)

    Returns:
        Updated inverse Hessian, or h_inv unchanged when sᵀy ≤ 0
    """
    sy = curvature(s, y)
    if sy <= 0:
        return h_inv
    rho = 1.0 / sy
    hy = h_inv @ y
    # Expanded form of the product, avoiding two dense n×n multiplications.
    updated = (
        h_inv
        - rho * (np.outer(s, hy) + np.outer(hy, s))
        + (rho * rho * float(y @ hy) + rho) * np.outer(s, s)
    )
    return 0.5 * (updated + updated.T)


def lbfgs_direction(
    history: Sequence[Pair], grad: np.ndarray, gamma0: Optional[float] = None
) -> np.ndarray:
    """
    Two-loop recursion for −H⁻¹·grad.

    Args:
        history: (s, y) pairs, oldest first, each with sᵀy > 0
        grad: Current gradient
        gamma0: Initial matrix scale; defaults to sᵀy/yᵀy of the newest
            pair, or 1 with an empty history

    Returns:
        Search direction
    """
    if gamma0 is None:
        if history:
            s_new, y_new = history[-1]
            gamma0 = curvature(s_new, y_new) / float(y_new @ y_new)
        else:
            gamma0 = 1.0

    q = np.array(grad, dtype=float, copy=True)
    alphas = []
    for s, y in reversed(history):
        rho = 1.0 / curvature(s, y)
        a = rho * float(s @ q)
        q -= a * y
        alphas.append((rho, a))

    r = gamma0 * q
    for (s, y), (rho, a) in zip(history, reversed(alphas)):
        b = rho * float(y @ r)
        r += (a - b) * s
    return -r


class SearchStrategy(ABC):
    """
    Base class for direction strategies.

    A strategy turns the current gradient into a search direction and
    learns from accepted steps. Its state round-trips through state() and
    restore() so a run can be checkpointed and resumed.
    """

    algorithm: Algorithm

    def __init__(self, config: OptimizerConfig):
        self.config = config
        self.initial_scale: Optional[float] = None
        self.first_pair_scale: Optional[float] = None

    @property
    def curvature_c2(self) -> float:
        return self.config.wolfe_c2

    @property
    def has_memory(self) -> bool:
        return False

    @property
    def minimizes_lines(self) -> bool:
        """Every line search starts from the same first trial and runs to a near minimum."""
        return False

    def start(self, grad: np.ndarray) -> None:
        """Fix the initial scaling 1/‖∇f(x₀)‖ on the first gradient seen."""
        if self.initial_scale is None:
            norm = float(np.linalg.norm(grad))
            self.initial_scale = 1.0 / norm if norm > 0 else 1.0

    def remember_scale(self, s: np.ndarray, y: np.ndarray) -> None:
        """Record sᵀy/yᵀy of the first pair accepted since the last reset."""
        if self.first_pair_scale is None:
            self.first_pair_scale = curvature(s, y) / float(y @ y)

    @abstractmethod
    def direction(self, grad: np.ndarray) -> np.ndarray:
        """Search direction for the current gradient."""

    def update(self, s: np.ndarray, y: np.ndarray) -> bool:
        """
        Learn from an accepted step.

        Returns:
            bool: False when the pair failed the curvature gate
        """
        return True

    def reset(self) -> None:
        """Forget curvature information; the next direction is steepest."""

    def state(self) -> Dict[str, Any]:
        return {"initial_scale": self.initial_scale, "first_pair_scale": self.first_pair_scale}

    def restore(self, state: Dict[str, Any]) -> None:
        self.initial_scale = state["initial_scale"]
        self.first_pair_scale = state["first_pair_scale"]


class SteepestDescent(SearchStrategy):
    """Steepest descent, paired with a near-exact line search."""

    algorithm = Algorithm.STEEPEST

    @property
    def curvature_c2(self) -> float:
        return self.config.steepest_c2

    @property
    def minimizes_lines(self) -> bool:
        return True

    def direction(self, grad: np.ndarray) -> np.ndarray:
        return -np.asarray(grad, dtype=float)


class DenseInverseStrategy(SearchStrategy):
    """
    Quasi-Newton strategy holding a dense inverse Hessian.

    The first direction is −∇f/‖∇f‖. The inverse starts as (sᵀy/yᵀy)·E at
    the first accepted pair and then takes the update.
    """

    def __init__(self, config: OptimizerConfig):
        super().__init__(config)
        self.h_inv: Optional[np.ndarray] = None

    @property
    def has_memory(self) -> bool:
        return self.h_inv is not None

    @staticmethod
    @abstractmethod
    def apply_update(h_inv: np.ndarray, s: np.ndarray, y: np.ndarray) -> np.ndarray:
        ...

    def direction(self, grad: np.ndarray) -> np.ndarray:
        self.start(grad)
        if self.h_inv is None:
            return -self.initial_scale * np.asarray(grad, dtype=float)
        return -(self.h_inv @ grad)

    def update(self, s: np.ndarray, y: np.ndarray) -> bool:
        if curvature(s, y) <= 0:
            return False
        if self.h_inv is None:
            self.remember_scale(s, y)
            self.h_inv = self.first_pair_scale * np.eye(s.size)
        self.h_inv = self.apply_update(self.h_inv, s, y)
        return True

    def reset(self) -> None:
        self.h_inv = None
        self.first_pair_scale = None

    def state(self) -> Dict[str, Any]:
        state = super().state()
        state["h_inv"] = None if self.h_inv is None else self.h_inv.copy()
        return state

    def restore(self, state: Dict[str, Any]) -> None:
        super().restore(state)
        h_inv = state["h_inv"]
        self.h_inv = None if h_inv is None else np.array(h_inv, copy=True)


class DFPStrategy(DenseInverseStrategy):
    algorithm = Algorithm.DFP
    apply_update = staticmethod(dfp_update_inverse)


class BFGSStrategy(DenseInverseStrategy):
    algorithm = Algorithm.BFGS
    apply_update = staticmethod(bfgs_update_inverse)


class LBFGSStrategy(SearchStrategy):
    """
    Memory-limited BFGS over the last m accepted pairs.

    With lbfgs_scaling = "newest_pair" the initial matrix is γ·E with
    γ = sᵀy/yᵀy of the newest pair; with "first_pair" γ is fixed by the
    first accepted pair, which reproduces dense BFGS exactly while the
    memory is not full.
    """

    algorithm = Algorithm.LBFGS

    def __init__(self, config: OptimizerConfig):
        super().__init__(config)
        self.history: Deque[Pair] = deque(maxlen=config.lbfgs_memory)

    @property
    def has_memory(self) -> bool:
        return bool(self.history)

    def direction(self, grad: np.ndarray) -> np.ndarray:
        self.start(grad)
        if not self.history:
            return lbfgs_direction(self.history, grad, gamma0=self.initial_scale)
        if self.config.lbfgs_scaling == "first_pair":
            return lbfgs_direction(self.history, grad, gamma0=self.first_pair_scale)
        return lbfgs_direction(self.history, grad)

    def update(self, s: np.ndarray, y: np.ndarray) -> bool:
        if curvature(s, y) <= 0:
            return False
        self.remember_scale(s, y)
        self.history.append((np.array(s, copy=True), np.array(y, copy=True)))
        return True

    def reset(self) -> None:
        self.history.clear()
        self.first_pair_scale = None

    def state(self) -> Dict[str, Any]:
        state = super().state()
        state["history"] = [(s.copy(), y.copy()) for s, y in self.history]
        return state

    def restore(self, state: Dict[str, Any]) -> None:
        super().restore(state)
        self.history = deque(
            ((np.array(s, copy=True), np.array(y, copy=True)) for s, y in state["history"]),
            maxlen=self.config.lbfgs_memory,
        )


_STRATEGIES = {
    Algorithm.STEEPEST: SteepestDescent,
    Algorithm.DFP: DFPStrategy,
    Algorithm.BFGS: BFGSStrategy,
    Algorithm.LBFGS: LBFGSStrategy,
}


def create_strategy(config: OptimizerConfig) -> SearchStrategy:
    """Strategy instance for config.algorithm."""
    return _STRATEGIES[Algorithm(config.algorithm)](config)
