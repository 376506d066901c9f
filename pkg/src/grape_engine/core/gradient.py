"""
Fidelity Gradient Assembly

Builds the N×K gradient of Re⟨σ|ρ(t_N)⟩ from a trajectory cache. For step
n and control k:

    grad[n][k] = Re⟨backward[n]| ∂P_n/∂c_n^(k) |forward[n−1]⟩

with the propagator derivative produced by the selected route:

- first_order:      P_n·(−iL_kΔt), no extra exponentials
- series_exact:     adaptive commutator series with scaling and squaring
- series_truncated: cached P_n times a fixed number of commutator terms
- eigen_exact:      eigenframe of the Hilbert-space generator
- fd_*:             propagator-level finite differences

Control generators already carry the 2π factor, so entries are per Hz.
"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
import structlog

from grape_engine.config.settings import DerivativeMethod, FdStepPolicy, GradientMethod
from grape_engine.core import expkernel
from grape_engine.core.propagation import (
    ControlProblem,
    PulseSequence,
    TrajectoryCache,
    fidelity,
    ordered_map,
    propagate,
)
from grape_engine.core.spinsys import devectorize, vectorize
from grape_engine.errors import InvalidMethodError

log = structlog.get_logger(__name__)

# Norm of a step propagator entering the finite-difference step rule.
PROPAGATOR_NORM = 1.0

# Objective-level differencing tolerates a tighter threshold than
# propagator-level differencing: the objective is a scalar of order one.
OBJECTIVE_FD_POLICY = FdStepPolicy(error_threshold=1e-10)

_FD_SCHEMES = {
    DerivativeMethod.FD_FORWARD: "forward",
    DerivativeMethod.FD_CENTRAL: "central",
    DerivativeMethod.FD_CENTRAL4: "central4",
}

StepRow = Tuple[np.ndarray, int]


@dataclass(frozen=True)
class GradientReport:
    """
    Fidelity and its gradient for one pulse.

    Attributes:
        fidelity: Re⟨σ|ρ(t_N)⟩
        grad: N×K table of ∂fidelity/∂c_n^(k), per Hz
        method: Derivative method used
        series_terms_used: Commutator terms per step (0 for non-series methods)
    """

    fidelity: float
    grad: np.ndarray
    method: GradientMethod
    series_terms_used: np.ndarray

    @property
    def grad_norm(self) -> float:
        return float(np.max(np.abs(self.grad), initial=0.0))


def _require_eigen(problem: ControlProblem) -> None:
    if problem.liouvillians.has_relaxation:
        raise InvalidMethodError("eigen_exact is not valid with nonzero relaxation")
    if problem.hamiltonians is None:
        raise InvalidMethodError("eigen_exact needs the Hilbert-space Hamiltonians")


def _row_builder(
    problem: ControlProblem, cache: TrajectoryCache, method: GradientMethod
) -> Callable[[int], StepRow]:
    """Per-step worker returning the K gradient entries of step n and its series terms."""
    opts = method.expm_options
    dt = problem.dt
    controls = problem.liouvillians.controls
    amps = cache.pulse.amplitudes

    def fold(n: int, dp: np.ndarray) -> float:
        return float(np.vdot(cache.backward[n], dp @ cache.forward[n - 1]).real)

    if method.name is DerivativeMethod.FIRST_ORDER:

        def first_order(n: int) -> StepRow:
            # ⟨bwd[n]|P_n X⟩ = ⟨bwd[n−1]|X⟩, so P_n is never formed.
            fwd = cache.forward[n - 1]
            row = [np.vdot(cache.backward[n - 1], -1j * dt * (lk @ fwd)).real for lk in controls]
            return np.array(row), 0

        return first_order

    if method.name is DerivativeMethod.SERIES_EXACT:

        def series_exact(n: int) -> StepRow:
            generator = problem.generator(amps[n - 1])
            row, terms = [], 0
            for lk in controls:
                pair = expkernel.dexp_series(generator, lk, dt, opts)
                row.append(fold(n, pair.derivative))
                terms = max(terms, pair.terms)
            return np.array(row), terms

        return series_exact

    if method.name is DerivativeMethod.SERIES_TRUNCATED:
        order = method.series_order

        def series_truncated(n: int) -> StepRow:
            a = -1j * dt * problem.generator(amps[n - 1])
            p = cache.propagator(problem, n, opts)
            row = []
            for lk in controls:
                factor, _ = expkernel.commutator_series(a, -1j * dt * lk, opts, n_terms=order)
                row.append(fold(n, p @ factor))
            return np.array(row), int(order)

        return series_truncated

    if method.name is DerivativeMethod.EIGEN_EXACT:
        _require_eigen(problem)
        hams = problem.hamiltonians

        def eigen_exact(n: int) -> StepRow:
            frame = expkernel.EigenFrame.of(hams.total(amps[n - 1]))
            rho = devectorize(cache.forward[n - 1])
            row = []
            for hk in hams.controls:
                d = frame.derivative_factor(hk, dt)
                # lift(D)·vec(ρ) = vec(Dρ − ρD), folded with bwd[n−1] = P_n†·bwd[n]
                moved = vectorize(d @ rho - rho @ d)
                row.append(np.vdot(cache.backward[n - 1], moved).real)
            return np.array(row), 0

        return eigen_exact

    if method.name in _FD_SCHEMES:
        scheme = _FD_SCHEMES[method.name]
        h_step = expkernel.fd_step_select(method.fd_policy, PROPAGATOR_NORM)

        def finite_difference(n: int) -> StepRow:
            generator = problem.generator(amps[n - 1])
            base = cache.propagator(problem, n, opts) if scheme == "forward" else None
            row = [
                fold(n, expkernel.dexp_fd(generator, lk, dt, h_step, scheme, opts, base=base))
                for lk in controls
            ]
            return np.array(row), 0

        return finite_difference

    raise InvalidMethodError(f"Unknown gradient method: {method.name}")


def gradient(
    problem: ControlProblem,
    pulse: PulseSequence,
    method: GradientMethod,
    cache: Optional[TrajectoryCache] = None,
) -> GradientReport:
    """
    Fidelity gradient with respect to every pulse amplitude.

    Args:
        problem: Control problem
        pulse: Amplitude table
        method: Derivative method and its parameters
        cache: Trajectory for this pulse; propagated when omitted

    Returns:
        GradientReport

    Raises:
        InvalidMethodError: eigen_exact with relaxation or without Hamiltonians
    """
    pulse.check_against(problem)
    if method.name is DerivativeMethod.EIGEN_EXACT:
        _require_eigen(problem)
    if cache is None:
        cache = propagate(problem, pulse, method.expm_options)

    step_row = _row_builder(problem, cache, method)
    rows: List[StepRow] = ordered_map(step_row, range(1, problem.n_steps + 1), problem.threads)

    grad = np.vstack([row for row, _ in rows])
    terms = np.array([t for _, t in rows], dtype=int)
    grad.flags.writeable = False
    terms.flags.writeable = False

    log.debug(
        "gradient.assembled",
        method=method.name.value,
        n_steps=problem.n_steps,
        max_terms=int(terms.max(initial=0)),
    )
    return GradientReport(
        fidelity=fidelity(problem, cache),
        grad=grad,
        method=method,
        series_terms_used=terms,
    )


def gradient_and_fidelity_fused(
    problem: ControlProblem, pulse: PulseSequence, method: GradientMethod
) -> GradientReport:
    """Objective and gradient from a single trajectory."""
    cache = propagate(problem, pulse, method.expm_options)
    return gradient(problem, pulse, method, cache=cache)


def objective_fd_gradient(
    problem: ControlProblem,
    pulse: PulseSequence,
    h_step: Optional[float] = None,
    method: Optional[GradientMethod] = None,
) -> np.ndarray:
    """
    Brute-force central differences of the fidelity.

    Every entry re-propagates the whole trajectory at c ± h; this is the
    reference used to check the analytic routes.

    Args:
        problem: Control problem
        pulse: Amplitude table
        h_step: Amplitude step (Hz); chosen by the round-off rule when omitted
        method: Supplies the exponential options

    Returns:
        N×K array of ∂fidelity/∂c_n^(k)
    """
    opts = (method or GradientMethod()).expm_options
    if h_step is None:
        h_step = expkernel.fd_step_select(OBJECTIVE_FD_POLICY, 1.0)

    base = pulse.amplitudes
    grad = np.zeros(base.shape)

    def shifted(n: int, k: int, delta: float) -> float:
        amps = base.copy()
        amps[n, k] += delta
        p = PulseSequence(amps)
        return fidelity(problem, propagate(problem, p, opts, keep_propagators=False))

    for n in range(base.shape[0]):
        for k in range(base.shape[1]):
            grad[n, k] = (shifted(n, k, h_step) - shifted(n, k, -h_step)) / (2.0 * h_step)
    return grad
