"""
Shared pytest configuration.
"""

from typing import Optional

import numpy as np
import pytest
import structlog

from grape_engine.analysis import random_hermitian_state
from grape_engine.config.log_setup import configure_logging
from grape_engine.config.settings import SpinChainSpec
from grape_engine.core.propagation import ControlProblem, PulseSequence
from grape_engine.core.spinsys import (
    build_hamiltonians,
    build_liouvillians,
    spin_operators,
    uniform_damping,
    vectorize,
)


@pytest.fixture(autouse=True)
def quiet_logging():
    """Keep kernel debug events out of test output; restore after CLI runs."""
    configure_logging("WARNING")
    yield
    structlog.reset_defaults()
    configure_logging("WARNING")


@pytest.fixture
def chain_problem():
    """
    Factory for spin-chain control problems.

    Defaults to an inversion of the total Sz; state_seed swaps in random
    Hermitian initial and target states.
    """

    def make(
        n_spins: int = 2,
        n_steps: int = 8,
        dt: float = 1e-4,
        offsets_hz: Optional[list] = None,
        j_hz: float = 20.0,
        relaxation_rate: float = 0.0,
        b1_max_hz: Optional[float] = 2500.0,
        threads: int = 1,
        state_seed: Optional[int] = None,
    ) -> ControlProblem:
        if offsets_hz is None:
            offsets_hz = list(np.linspace(-1000.0, 1000.0, n_spins)) if n_spins > 1 else [0.0]
        spec = SpinChainSpec(n_spins=n_spins, offsets_hz=offsets_hz, j_hz=j_hz)
        hams = build_hamiltonians(spec)
        relaxation = uniform_damping(hams.dim, relaxation_rate) if relaxation_rate > 0 else None
        if state_seed is None:
            total = sum(sz for _, _, sz in spin_operators(n_spins))
            rho0, sigma = vectorize(total), vectorize(-total)
        else:
            rng = np.random.default_rng(state_seed)
            rho0, sigma = (
                random_hermitian_state(rng, hams.dim),
                random_hermitian_state(rng, hams.dim),
            )
        return ControlProblem(
            liouvillians=build_liouvillians(hams, relaxation),
            rho0=rho0,
            sigma=sigma,
            n_steps=n_steps,
            dt=dt,
            bounds=b1_max_hz,
            hamiltonians=hams,
            threads=threads,
        )

    return make


@pytest.fixture
def random_pulse():
    """Factory for seeded uniform pulses within ±scale Hz."""

    def make(problem: ControlProblem, seed: int = 0, scale: float = 800.0) -> PulseSequence:
        rng = np.random.default_rng(seed)
        return PulseSequence(rng.uniform(-scale, scale, size=problem.shape))

    return make
