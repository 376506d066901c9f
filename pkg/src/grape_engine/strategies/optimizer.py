"""
GRAPE Optimizer

Concurrent-update pulse optimization: every amplitude of the pulse moves
at once along a quasi-Newton (or steepest-descent) direction, with a
strong-Wolfe line search and projection onto the amplitude box.

The optimizer minimizes f = 1 − fidelity. Reported fidelities and
gradient norms are in the user-facing (maximization) convention.
"""

import copy
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import structlog

from grape_engine.config.settings import GradientMethod, OptimizerConfig
from grape_engine.core.gradient import gradient_and_fidelity_fused
from grape_engine.core.propagation import ControlProblem, PulseSequence
from grape_engine.errors import NonFiniteObjectiveError
from grape_engine.strategies.line_search import StrongWolfeSearch
from grape_engine.strategies.quasi_newton import SearchStrategy, create_strategy

log = structlog.get_logger(__name__)

# Initial amplitudes are drawn from ±(INIT_FRACTION·bound).
INIT_FRACTION = 0.4
# Cap assumed for unbounded problems when drawing or scaling steps.
UNBOUNDED_REFERENCE_HZ = 2500.0
# First trial step, as a fraction of the amplitude cap.
INITIAL_STEP_FRACTION = 0.1
UNBOUNDED_INITIAL_STEP_HZ = 100.0


class OptimizationStatus(str, Enum):
    CONVERGED = "converged"
    TARGET_REACHED = "target_reached"
    BUDGET_EXHAUSTED = "budget_exhausted"
    STALLED = "stalled"

    @property
    def succeeded(self) -> bool:
        return self in (OptimizationStatus.CONVERGED, OptimizationStatus.TARGET_REACHED)


@dataclass(frozen=True)
class IterationRecord:
    """One row of the iteration log."""

    iteration: int
    fidelity: float
    grad_norm: float
    step: float
    evals: int
    wall_ms: float


@dataclass
class OptimizerState:
    """
    Resumable optimizer state.

    Attributes:
        x: Flattened pulse amplitudes
        f: Objective 1 − fidelity at x
        grad: Objective gradient at x
        iteration: Completed iterations
        strategy: Direction-strategy state (inverse Hessian or pair history)
        records: Iteration log so far
        prev_alpha: Last accepted step length
        prev_slope: Directional derivative at the start of the last search
        restarted: Curvature memory was dropped on the last iteration
        curvature_rejections: Pairs refused by the curvature gate
        evals: Objective evaluations so far
    """

    x: np.ndarray
    f: float
    grad: np.ndarray
    iteration: int = 0
    strategy: Dict[str, Any] = field(default_factory=dict)
    records: List[IterationRecord] = field(default_factory=list)
    prev_alpha: Optional[float] = None
    prev_slope: Optional[float] = None
    restarted: bool = False
    curvature_rejections: int = 0
    evals: int = 0


@dataclass(frozen=True)
class OptimizationResult:
    pulse: PulseSequence
    fidelity: float
    records: Tuple[IterationRecord, ...]
    status: OptimizationStatus
    curvature_rejections: int
    state: OptimizerState


def initial_pulse(problem: ControlProblem, seed: int = 0) -> PulseSequence:
    """
    Seeded uniform random pulse in ±(0.4·bound) per control.

    Unbounded controls use the 2500 Hz reference cap.
    """
    rng = np.random.default_rng(seed)
    caps = (
        problem.bounds
        if problem.bounds is not None
        else np.full(problem.n_controls, UNBOUNDED_REFERENCE_HZ)
    )
    spread = INIT_FRACTION * caps
    return PulseSequence(rng.uniform(-1.0, 1.0, size=problem.shape) * spread[None, :])


class GrapeOptimizer:
    """
    Pulse optimizer driving a direction strategy and a line search.

    Args:
        problem: Control problem
        method: Gradient method
        config: Optimizer configuration
        init: Starting pulse; seeded random when omitted
        resume: State from checkpoint(); continues the run exactly
    """

    def __init__(
        self,
        problem: ControlProblem,
        method: GradientMethod,
        config: OptimizerConfig,
        init: Optional[PulseSequence] = None,
        resume: Optional[OptimizerState] = None,
    ):
        self.problem = problem
        self.method = method
        self.config = config
        self.strategy: SearchStrategy = create_strategy(config)

        if problem.bounds is not None:
            caps = np.tile(problem.bounds, problem.n_steps)
            self.lower: Optional[np.ndarray] = -caps
            self.upper: Optional[np.ndarray] = caps
        else:
            self.lower = self.upper = None

        self.search = StrongWolfeSearch(
            c1=config.wolfe_c1,
            c2=self.strategy.curvature_c2,
            max_evals=config.max_line_evals,
            lower=self.lower,
            upper=self.upper,
        )

        if resume is not None:
            self.state = copy.deepcopy(resume)
            self.strategy.restore(self.state.strategy)
            return

        pulse = init if init is not None else initial_pulse(problem, config.seed)
        pulse.check_against(problem)
        if not pulse.within(problem.bounds, tol=1e-9):
            raise ValueError("Initial pulse violates the amplitude bounds")
        x0 = pulse.flatten()
        f0, g0 = self.objective(x0)
        self.state = OptimizerState(x=x0, f=f0, grad=g0, evals=1)

    def objective(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        """1 − fidelity and its gradient at a flattened pulse."""
        pulse = PulseSequence.from_flat(x, self.problem.shape)
        report = gradient_and_fidelity_fused(self.problem, pulse, self.method)
        f = 1.0 - report.fidelity
        g = -report.grad.reshape(-1)
        if not (np.isfinite(f) and np.all(np.isfinite(g))):
            dump = self._dump(x, f, g)
            log.error("optimizer.non_finite", **{k: v for k, v in dump.items() if k != "x"})
            raise NonFiniteObjectiveError("Objective or gradient is not finite", state=dump)
        return f, g

    def _dump(self, x: np.ndarray, f: float, g: np.ndarray) -> Dict[str, Any]:
        state = getattr(self, "state", None)
        return {
            "iteration": state.iteration if state is not None else 0,
            "objective": f,
            "non_finite_gradient_entries": int(np.count_nonzero(~np.isfinite(g))),
            "max_abs_amplitude": float(np.max(np.abs(x), initial=0.0)),
            "method": self.method.name.value,
            "algorithm": self.strategy.algorithm.value,
            "x": np.array(x, copy=True),
        }

    def projected_gradient(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Objective gradient with components pushing out of the box removed."""
        if self.upper is None:
            return g
        blocked = ((x >= self.upper) & (g < 0)) | ((x <= self.lower) & (g > 0))
        return np.where(blocked, 0.0, g)

    def checkpoint(self) -> OptimizerState:
        """Deep copy of the current state, accepted by resume=."""
        self.state.strategy = self.strategy.state()
        return copy.deepcopy(self.state)

    def _first_alpha(self, p: np.ndarray, slope: float) -> float:
        state = self.state
        if (
            state.prev_alpha is not None
            and not state.restarted
            and not self.strategy.minimizes_lines
        ):
            if self.strategy.has_memory:
                return 1.0
            if state.prev_slope is not None and slope != 0:
                return state.prev_alpha * state.prev_slope / slope
        if self.config.initial_step_hz is not None:
            target = self.config.initial_step_hz
        elif self.problem.bounds is not None and np.max(self.problem.bounds) > 0:
            target = INITIAL_STEP_FRACTION * float(np.max(self.problem.bounds))
        else:
            target = UNBOUNDED_INITIAL_STEP_HZ
        return target / float(np.max(np.abs(p)))

    def _status(self) -> Optional[OptimizationStatus]:
        state = self.state
        if 1.0 - state.f >= self.config.fidelity_target:
            return OptimizationStatus.TARGET_REACHED
        pg = self.projected_gradient(state.x, state.grad)
        if np.max(np.abs(pg), initial=0.0) <= self.config.grad_tol:
            return OptimizationStatus.CONVERGED
        return None

    def _record(self, step: float, evals: int, started: float) -> None:
        state = self.state
        pg = self.projected_gradient(state.x, state.grad)
        record = IterationRecord(
            iteration=state.iteration,
            fidelity=1.0 - state.f,
            grad_norm=float(np.max(np.abs(pg), initial=0.0)),
            step=step,
            evals=evals,
            wall_ms=(time.perf_counter() - started) * 1e3,
        )
        state.records.append(record)
        log.info(
            "optimizer.iteration",
            iteration=record.iteration,
            fidelity=record.fidelity,
            grad_norm=record.grad_norm,
            step=record.step,
            evals=record.evals,
        )

    def step(self) -> Optional[OptimizationStatus]:
        """
        One iteration: direction, line search, strategy update.

        Returns:
            STALLED when no decrease could be found, otherwise None
        """
        started = time.perf_counter()
        state = self.state
        pg = self.projected_gradient(state.x, state.grad)

        p = self.strategy.direction(state.grad)
        slope = float(state.grad @ self.search.path_direction(state.x, p, 0.0))
        restarted = False
        if not slope < 0:
            # Not a descent direction on the box: drop curvature memory.
            self.strategy.reset()
            p = -pg
            slope = float(state.grad @ self.search.path_direction(state.x, p, 0.0))
            restarted = True

        result = self.search.search(
            self.objective, state.x, state.f, state.grad, p, self._first_alpha(p, slope)
        )
        state.evals += result.n_evals

        if result.alpha == 0.0 or not result.f < state.f:
            if self.strategy.has_memory:
                log.warning("optimizer.restart", iteration=state.iteration)
                self.strategy.reset()
                state.restarted = True
                return None
            log.warning("optimizer.stalled", iteration=state.iteration, evals=result.n_evals)
            return OptimizationStatus.STALLED

        s = result.x - state.x
        y = result.grad - state.grad
        if not self.strategy.update(s, y):
            state.curvature_rejections += 1
            log.warning("optimizer.curvature_rejected", iteration=state.iteration + 1)

        state.x, state.f, state.grad = result.x, result.f, result.grad
        state.iteration += 1
        state.prev_alpha = result.alpha
        state.prev_slope = slope
        state.restarted = restarted
        self._record(result.alpha, result.n_evals, started)
        return None

    def run(self) -> OptimizationResult:
        """Iterate until a stopping rule fires or the budget runs out."""
        state = self.state
        if not state.records:
            self._record(0.0, state.evals, time.perf_counter())

        log.info(
            "optimizer.start",
            algorithm=self.strategy.algorithm.value,
            method=self.method.name.value,
            n_variables=state.x.size,
            fidelity=1.0 - state.f,
        )
        status = self._status()
        while status is None and state.iteration < self.config.max_iters:
            status = self.step() or self._status()
        if status is None:
            status = OptimizationStatus.BUDGET_EXHAUSTED

        state.strategy = self.strategy.state()
        log.info(
            "optimizer.finished",
            status=status.value,
            iterations=state.iteration,
            fidelity=1.0 - state.f,
            evals=state.evals,
            curvature_rejections=state.curvature_rejections,
        )
        return OptimizationResult(
            pulse=PulseSequence.from_flat(state.x, self.problem.shape),
            fidelity=1.0 - state.f,
            records=tuple(state.records),
            status=status,
            curvature_rejections=state.curvature_rejections,
            state=copy.deepcopy(state),
        )


def optimize(
    problem: ControlProblem,
    init: Optional[PulseSequence],
    method: GradientMethod,
    config: OptimizerConfig,
) -> OptimizationResult:
    """Run a GrapeOptimizer from init (seeded random when None)."""
    return GrapeOptimizer(problem, method, config, init=init).run()
