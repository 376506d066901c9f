"""
Pulse Analysis

Offset-sweep inversion profiles and gradient-method comparisons.
"""

from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from grape_engine.config.settings import (
    DerivativeMethod,
    ExpmOptions,
    GradientMethod,
    SpinChainSpec,
)
from grape_engine.core.gradient import gradient, objective_fd_gradient
from grape_engine.core.propagation import (
    ControlProblem,
    PulseSequence,
    fidelity,
    ordered_map,
    propagate,
)
from grape_engine.core.spinsys import (
    build_hamiltonians,
    build_liouvillians,
    spin_operators,
    uniform_damping,
    vectorize,
)

log = structlog.get_logger(__name__)

# Step durations (s) for the first-order error scaling fit.
DT_GRID = (1e-6, 2e-6, 5e-6, 1e-5, 2e-5)

# Reference name for brute-force differences of the fidelity.
OBJECTIVE_FD = "objective_fd"


def sweep_offsets(
    problem: ControlProblem,
    pulse: PulseSequence,
    offsets_hz: Sequence[float],
    relaxation_rate: float = 0.0,
    opts: Optional[ExpmOptions] = None,
) -> List[Tuple[float, float]]:
    """
    Inversion profile of a pulse over resonance offsets.

    Each offset re-propagates an isolated spin starting from Sz under the
    waveform and reports the final ⟨Sz⟩ normalized to its initial value.

    Args:
        problem: Supplies the time step and thread count
        pulse: Waveform with x and y columns
        offsets_hz: Offsets to evaluate
        relaxation_rate: Uniform damping rate of the isolated spin (1/s)
        opts: Exponential options

    Returns:
        (offset_hz, sz) rows in grid order
    """
    pulse.check_against(problem)
    sz = vectorize(spin_operators(1)[0][2])
    relaxation = uniform_damping(2, relaxation_rate) if relaxation_rate > 0 else None

    def evaluate(offset: float) -> Tuple[float, float]:
        hams = build_hamiltonians(SpinChainSpec(n_spins=1, offsets_hz=[offset]))
        single = ControlProblem(
            liouvillians=build_liouvillians(hams, relaxation),
            rho0=sz,
            sigma=sz,
            n_steps=problem.n_steps,
            dt=problem.dt,
        )
        cache = propagate(single, pulse, opts, keep_propagators=False)
        return float(offset), fidelity(single, cache)

    rows = ordered_map(evaluate, list(offsets_hz), problem.threads)
    log.info("analysis.sweep", points=len(rows))
    return rows


@dataclass(frozen=True)
class GradientComparison:
    """
    Deviation between two gradient methods on one pulse.

    Attributes:
        method_a: First method name
        method_b: Second method name
        max_abs_deviation: Largest componentwise |grad_a − grad_b|
        mean_abs_deviation: Mean componentwise |grad_a − grad_b|
        relative_max_deviation: max_abs_deviation over the max-norm of grad_b
        dt_grid: Step durations of the first-order error fit
        first_order_errors: Max-norm first-order error at each step duration
        first_order_slope: Log-log slope of first_order_errors against dt
    """

    method_a: str
    method_b: str
    max_abs_deviation: float
    mean_abs_deviation: float
    relative_max_deviation: float
    dt_grid: Tuple[float, ...] = ()
    first_order_errors: Tuple[float, ...] = ()
    first_order_slope: Optional[float] = None


def random_hermitian_state(rng: np.random.Generator, hilbert_dim: int) -> np.ndarray:
    shape = (hilbert_dim, hilbert_dim)
    m = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return vectorize((m + m.conj().T) / 2)


def first_order_error_scaling(
    problem: ControlProblem,
    pulse: PulseSequence,
    dt_grid: Sequence[float] = DT_GRID,
    reference: Optional[GradientMethod] = None,
    state_seed: Optional[int] = 0,
) -> Tuple[List[float], float]:
    """
    Max-norm error of the first-order gradient against a reference over a
    range of step durations, and the log-log slope of that error.

    The fit runs on seeded random Hermitian ρ0 and σ. When σ is a multiple
    of ρ0 (an inversion, say) the Δt² error term cancels and the slope comes
    out near 4; state_seed=None keeps the problem's own states.
    """
    reference = reference or GradientMethod(name=DerivativeMethod.SERIES_EXACT)
    first = GradientMethod(name=DerivativeMethod.FIRST_ORDER)
    if state_seed is not None:
        rng = np.random.default_rng(state_seed)
        d = problem.liouvillians.hilbert_dim
        problem = replace(
            problem, rho0=random_hermitian_state(rng, d), sigma=random_hermitian_state(rng, d)
        )
    errors = []
    for dt in dt_grid:
        scaled = replace(problem, dt=float(dt))
        exact = gradient(scaled, pulse, reference).grad
        approx = gradient(scaled, pulse, first).grad
        errors.append(float(np.max(np.abs(approx - exact))))
    slope = float(np.polyfit(np.log(dt_grid), np.log(errors), 1)[0])
    return errors, slope


def gradient_check(
    problem: ControlProblem,
    pulse: PulseSequence,
    method_a: GradientMethod,
    method_b: Union[GradientMethod, str],
    dt_grid: Optional[Sequence[float]] = DT_GRID,
) -> GradientComparison:
    """
    Compare two gradient methods, plus the Δt scaling of the first-order error.

    Args:
        problem: Control problem
        pulse: Pulse at which both gradients are evaluated
        method_a: First method
        method_b: Second method (reference for the relative deviation), or
            OBJECTIVE_FD for brute-force differences of the fidelity
        dt_grid: Step durations for the scaling fit; None skips it
    """
    grad_a = gradient(problem, pulse, method_a).grad
    if method_b == OBJECTIVE_FD:
        grad_b = objective_fd_gradient(problem, pulse, method=method_a)
        name_b = OBJECTIVE_FD
    else:
        grad_b = gradient(problem, pulse, method_b).grad
        name_b = method_b.name.value
    deviation = np.abs(grad_a - grad_b)
    scale = float(np.max(np.abs(grad_b), initial=0.0))
    max_dev = float(np.max(deviation, initial=0.0))

    errors: List[float] = []
    slope = None
    if dt_grid:
        errors, slope = first_order_error_scaling(problem, pulse, dt_grid)

    comparison = GradientComparison(
        method_a=method_a.name.value,
        method_b=name_b,
        max_abs_deviation=max_dev,
        mean_abs_deviation=float(np.mean(deviation)) if deviation.size else 0.0,
        relative_max_deviation=max_dev / scale if scale > 0 else max_dev,
        dt_grid=tuple(float(dt) for dt in (dt_grid or ())),
        first_order_errors=tuple(errors),
        first_order_slope=slope,
    )
    log.info(
        "analysis.gradient_check",
        method_a=comparison.method_a,
        method_b=comparison.method_b,
        max_abs_deviation=comparison.max_abs_deviation,
        first_order_slope=comparison.first_order_slope,
    )
    return comparison
