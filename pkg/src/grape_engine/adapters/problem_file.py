"""
Problem File Adapter

Turns a validated ProblemFile into a ControlProblem: spin chain,
Liouville generators, transfer states and amplitude bounds.

State names:
- ``sum_sz`` / ``minus_sum_sz``: ±Σ_i Sz_i
- ``sz:<i>`` / ``sx:<i>`` / ``sy:<i>``: single-spin operator, spins numbered from 1
- explicit list of d² ``[re, im]`` pairs, column-stacked
"""

from typing import Optional, Sequence, Union

import numpy as np
import structlog

from grape_engine.config.settings import ProblemFile
from grape_engine.core.propagation import ControlProblem
from grape_engine.core.spinsys import (
    build_hamiltonians,
    build_liouvillians,
    spin_operators,
    uniform_damping,
    vectorize,
)
from grape_engine.errors import ProblemFileError

log = structlog.get_logger(__name__)

StateSpec = Union[str, Sequence[Sequence[float]]]

_SINGLE_SPIN = {"sx": 0, "sy": 1, "sz": 2}


def resolve_state(spec: StateSpec, n_spins: int, field: str = "transfer") -> np.ndarray:
    """
    Liouville-space vector for a named or explicit state.

    Raises:
        ProblemFileError: Unknown name, bad spin index or wrong length
    """
    dim = 2**n_spins
    if isinstance(spec, str):
        name = spec.strip().lower()
        ops = spin_operators(n_spins)
        if name in ("sum_sz", "minus_sum_sz"):
            total = sum(sz for _, _, sz in ops)
            sign = -1.0 if name.startswith("minus") else 1.0
            return vectorize(sign * total)
        kind, _, index = name.partition(":")
        if kind in _SINGLE_SPIN and index:
            try:
                i = int(index)
            except ValueError:
                raise ProblemFileError(f"Bad spin index in state {spec!r}", field=field) from None
            if not 1 <= i <= n_spins:
                raise ProblemFileError(
                    f"Spin index {i} out of range 1..{n_spins} in state {spec!r}", field=field
                )
            return vectorize(ops[i - 1][_SINGLE_SPIN[kind]])
        raise ProblemFileError(f"Unknown state name {spec!r}", field=field)

    pairs = np.asarray(spec, dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ProblemFileError("Explicit states are lists of [re, im] pairs", field=field)
    if pairs.shape[0] != dim * dim:
        raise ProblemFileError(
            f"Explicit state has {pairs.shape[0]} entries, expected {dim * dim}", field=field
        )
    if not np.all(np.isfinite(pairs)):
        raise ProblemFileError("Explicit state has non-finite entries", field=field)
    return pairs[:, 0] + 1j * pairs[:, 1]


def build_problem(problem_file: ProblemFile, threads: Optional[int] = None) -> ControlProblem:
    """
    ControlProblem described by a problem file.

    Args:
        problem_file: Validated problem definition
        threads: Worker threads; defaults to the [engine] section

    Returns:
        ControlProblem
    """
    system = problem_file.system
    hams = build_hamiltonians(system, system.spectrometer_mhz)
    relaxation = (
        uniform_damping(hams.dim, system.relaxation_rate) if system.relaxation_rate > 0 else None
    )
    liouvillians = build_liouvillians(hams, relaxation)

    rho0 = resolve_state(problem_file.transfer.initial, system.n_spins, "transfer.initial")
    sigma = resolve_state(problem_file.transfer.target, system.n_spins, "transfer.target")

    bounds = None
    if system.b1_max_hz is not None:
        bounds = np.full(len(liouvillians.controls), system.b1_max_hz)

    try:
        problem = ControlProblem(
            liouvillians=liouvillians,
            rho0=rho0,
            sigma=sigma,
            n_steps=problem_file.pulse.n_steps,
            dt=problem_file.pulse.dt,
            bounds=bounds,
            hamiltonians=hams,
            threads=threads if threads is not None else problem_file.engine.threads,
        )
    except ValueError as e:
        raise ProblemFileError(str(e), field="transfer") from e

    log.info(
        "problem.built",
        n_spins=system.n_spins,
        liouville_dim=liouvillians.dim,
        n_steps=problem.n_steps,
        dt=problem.dt,
        relaxation=liouvillians.has_relaxation,
    )
    return problem
