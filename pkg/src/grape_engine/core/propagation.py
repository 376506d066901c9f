"""
Piecewise-Constant Propagation

Step propagators, forward state trajectory, backward costate trajectory
and the transfer fidelity for a point-to-point control problem.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, TypeVar

import numpy as np
import structlog

from grape_engine.config.settings import ExpmOptions
from grape_engine.core import expkernel
from grape_engine.core.spinsys import HamiltonianSet, LiouvillianSet
from grape_engine.errors import DimensionMismatchError

log = structlog.get_logger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """Map in input order, on a thread pool when threads > 1."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex).reshape(-1)
    norm = np.linalg.norm(v)
    if not np.isfinite(norm) or norm == 0.0:
        raise ValueError("State vector must have finite nonzero norm")
    return v / norm


@dataclass(frozen=True)
class ControlProblem:
    """
    Point-to-point transfer problem on a uniform time grid.

    Attributes:
        liouvillians: Drift/control generators in Liouville space
        rho0: Initial state, unit-normalized at construction
        sigma: Target state, unit-normalized at construction
        n_steps: Number of piecewise-constant steps N
        dt: Step duration in seconds
        bounds: Per-control amplitude cap (Hz), None when unbounded
        hamiltonians: Hilbert-space generators, needed by eigen_exact
        threads: Worker threads for per-step work
    """

    liouvillians: LiouvillianSet
    rho0: np.ndarray
    sigma: np.ndarray
    n_steps: int
    dt: float
    bounds: Optional[np.ndarray] = None
    hamiltonians: Optional[HamiltonianSet] = None
    threads: int = 1

    def __post_init__(self) -> None:
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        size = self.liouvillians.dim
        rho0 = normalize(self.rho0)
        sigma = normalize(self.sigma)
        for name, v in (("rho0", rho0), ("sigma", sigma)):
            if v.size != size:
                raise DimensionMismatchError(f"{name} has length {v.size}, expected {size}")
            v.flags.writeable = False
        object.__setattr__(self, "rho0", rho0)
        object.__setattr__(self, "sigma", sigma)

        if self.bounds is not None:
            bounds = np.broadcast_to(
                np.asarray(self.bounds, dtype=float), (self.n_controls,)
            ).copy()
            if np.any(bounds < 0) or not np.all(np.isfinite(bounds)):
                raise ValueError("bounds must be finite and nonnegative")
            bounds.flags.writeable = False
            object.__setattr__(self, "bounds", bounds)

        if self.hamiltonians is not None:
            if self.hamiltonians.dim**2 != size:
                raise DimensionMismatchError("Hamiltonians do not match the Liouville dimension")
            if len(self.hamiltonians.controls) != self.n_controls:
                raise DimensionMismatchError("Hamiltonian and Liouvillian control counts differ")

    @property
    def n_controls(self) -> int:
        return len(self.liouvillians.controls)

    @property
    def shape(self) -> tuple:
        return (self.n_steps, self.n_controls)

    def generator(self, pulse_row: Sequence[float]) -> np.ndarray:
        if len(pulse_row) != self.n_controls:
            raise DimensionMismatchError(
                f"Pulse row has {len(pulse_row)} entries, expected {self.n_controls}"
            )
        return self.liouvillians.total(pulse_row)


@dataclass(frozen=True)
class PulseSequence:
    """N×K table of piecewise-constant control amplitudes in Hz."""

    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        amps = np.array(self.amplitudes, dtype=float, copy=True)
        if amps.ndim != 2:
            raise DimensionMismatchError(f"Pulse table must be 2-D, got shape {amps.shape}")
        if not np.all(np.isfinite(amps)):
            raise ValueError("Pulse amplitudes must be finite")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def shape(self) -> tuple:
        return self.amplitudes.shape

    def flatten(self) -> np.ndarray:
        return self.amplitudes.reshape(-1).copy()

    @classmethod
    def from_flat(cls, x: np.ndarray, shape: tuple) -> "PulseSequence":
        return cls(np.asarray(x, dtype=float).reshape(shape))

    def within(self, bounds: Optional[np.ndarray], tol: float = 0.0) -> bool:
        if bounds is None:
            return True
        return bool(np.all(np.abs(self.amplitudes) <= bounds[None, :] + tol))

    def check_against(self, problem: ControlProblem) -> None:
        if self.shape != problem.shape:
            raise DimensionMismatchError(
                f"Pulse shape {self.shape} does not match problem shape {problem.shape}"
            )


@dataclass(frozen=True)
class TrajectoryCache:
    """
    Forward states, backward costates and step propagators.

    forward[n] is the state at t_n (forward[0] = rho0); backward[n] is the
    target propagated back to t_n (backward[N] = sigma); propagators[n-1]
    is the propagator P_n of step n.
    """

    forward: np.ndarray
    backward: np.ndarray
    propagators: Optional[List[np.ndarray]]
    pulse: PulseSequence

    def propagator(
        self, problem: ControlProblem, n: int, opts: Optional[ExpmOptions] = None
    ) -> np.ndarray:
        """Propagator of step n (1-based), recomputed when not retained."""
        if self.propagators is not None:
            return self.propagators[n - 1]
        return step_propagator(problem, self.pulse.amplitudes[n - 1], opts)


def step_propagator(
    problem: ControlProblem, pulse_row: Sequence[float], opts: Optional[ExpmOptions] = None
) -> np.ndarray:
    """exp[−i(L0 + Σ_k c_k L_k)Δt] for one pulse row."""
    return expkernel.expm(-1j * problem.dt * problem.generator(pulse_row), opts)


def propagate(
    problem: ControlProblem,
    pulse: PulseSequence,
    opts: Optional[ExpmOptions] = None,
    keep_propagators: bool = True,
) -> TrajectoryCache:
    """
    Forward and backward sweeps through the step propagators.

    forward[n] = P_n·forward[n−1], backward[n−1] = P_n†·backward[n].

    Args:
        problem: Control problem
        pulse: Amplitude table matching problem.shape
        opts: Exponential options
        keep_propagators: Retain P_n in the cache; when False they are
            recomputed identically on demand
    """
    pulse.check_against(problem)
    rows = list(pulse.amplitudes)
    propagators = ordered_map(
        lambda row: step_propagator(problem, row, opts), rows, problem.threads
    )

    n = problem.n_steps
    size = problem.liouvillians.dim
    forward = np.empty((n + 1, size), dtype=complex)
    backward = np.empty((n + 1, size), dtype=complex)
    forward[0] = problem.rho0
    for i, p in enumerate(propagators, start=1):
        forward[i] = p @ forward[i - 1]
    backward[n] = problem.sigma
    for i in range(n, 0, -1):
        backward[i - 1] = propagators[i - 1].conj().T @ backward[i]

    forward.flags.writeable = False
    backward.flags.writeable = False
    return TrajectoryCache(
        forward=forward,
        backward=backward,
        propagators=propagators if keep_propagators else None,
        pulse=pulse,
    )


def overlap(problem: ControlProblem, cache: TrajectoryCache) -> complex:
    """Complex overlap ⟨σ|ρ(t_N)⟩ of the unit-normalized states."""
    return complex(np.vdot(problem.sigma, cache.forward[-1]))


def fidelity(problem: ControlProblem, cache: TrajectoryCache) -> float:
    """Re⟨σ|ρ(t_N)⟩."""
    return overlap(problem, cache).real


def folded_overlaps(cache: TrajectoryCache) -> np.ndarray:
    """⟨backward[n]|forward[n]⟩ for every n; constant along an exact chain."""
    return np.einsum("ni,ni->n", cache.backward.conj(), cache.forward)
