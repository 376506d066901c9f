"""
Spin System Construction

Builds spin-1/2 operators for a linear chain, the drift and control
Hamiltonians, relaxation superoperators and their Liouville-space lifts.

Conventions:
- Frequencies in problem files are in Hz; every generator returned here is
  angular (rad/s), the 2π factor being applied at construction
- Density matrices are vectorized by stacking columns, so that
  L = E⊗H − Hᵀ⊗E + iR acts as L·vec(ρ) = vec(Hρ − ρH) + i·R·vec(ρ)
"""

from dataclasses import dataclass, field
from functools import reduce
from typing import List, Optional, Sequence, Tuple

import numpy as np
import structlog

from grape_engine.config.settings import SpinChainSpec
from grape_engine.errors import CapacityError, DimensionMismatchError

log = structlog.get_logger(__name__)

# Largest Hilbert dimension handled with dense matrices (d² = 4096).
DENSE_HILBERT_LIMIT = 64

HERMITIAN_TOL = 1e-12

TWO_PI = 2.0 * np.pi

_SX = np.array([[0.0, 0.5], [0.5, 0.0]], dtype=complex)
_SY = np.array([[0.0, -0.5j], [0.5j, 0.0]], dtype=complex)
_SZ = np.array([[0.5, 0.0], [0.0, -0.5]], dtype=complex)
_E2 = np.eye(2, dtype=complex)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.flags.writeable = False
    return a


def is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    """Max-entry Hermiticity check, relative to the largest entry when above 1."""
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= tol * scale)


@dataclass(frozen=True)
class HamiltonianSet:
    """Drift and control Hamiltonians in rad/s."""

    h0: np.ndarray
    controls: Tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "h0", _frozen(self.h0))
        object.__setattr__(self, "controls", tuple(_frozen(h) for h in self.controls))
        for name, m in [("h0", self.h0)] + [
            (f"controls[{k}]", h) for k, h in enumerate(self.controls)
        ]:
            if m.shape != self.h0.shape:
                raise DimensionMismatchError(
                    f"{name} has shape {m.shape}, expected {self.h0.shape}"
                )
            if not is_hermitian(m):
                raise ValueError(f"{name} is not Hermitian")

    @property
    def dim(self) -> int:
        return int(self.h0.shape[0])

    def total(self, amplitudes: Sequence[float]) -> np.ndarray:
        """H0 + Σ_k c_k H_k for one pulse row."""
        h = np.array(self.h0)
        for c, hk in zip(amplitudes, self.controls):
            h = h + c * hk
        return h


@dataclass(frozen=True)
class LiouvillianSet:
    """Liouville-space drift (with relaxation), controls and relaxation."""

    l0: np.ndarray
    controls: Tuple[np.ndarray, ...]
    relaxation: np.ndarray
    has_relaxation: bool = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "l0", _frozen(self.l0))
        object.__setattr__(self, "controls", tuple(_frozen(m) for m in self.controls))
        object.__setattr__(self, "relaxation", _frozen(self.relaxation))
        size = self.l0.shape[0]
        d = int(round(np.sqrt(size)))
        if d * d != size:
            raise DimensionMismatchError(f"Liouville dimension {size} is not a perfect square")
        for m in self.controls + (self.relaxation,):
            if m.shape != self.l0.shape:
                raise DimensionMismatchError(
                    f"Liouville matrix of shape {m.shape}, expected {self.l0.shape}"
                )
        object.__setattr__(self, "has_relaxation", bool(np.any(self.relaxation != 0)))

    @property
    def dim(self) -> int:
        return int(self.l0.shape[0])

    @property
    def hilbert_dim(self) -> int:
        return int(round(np.sqrt(self.dim)))

    def total(self, amplitudes: Sequence[float]) -> np.ndarray:
        """L0 + Σ_k c_k L_k for one pulse row."""
        generator = np.array(self.l0)
        for c, lk in zip(amplitudes, self.controls):
            generator = generator + c * lk
        return generator


def spin_operators(n_spins: int) -> List[Tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """
    Per-spin (Sx, Sy, Sz) operators of a spin-1/2 chain.

    Spin 1 is the leftmost tensor factor.

    Raises:
        CapacityError: If 2**n_spins exceeds the dense limit
    """
    if n_spins < 1:
        raise ValueError(f"n_spins must be >= 1, got {n_spins}")
    dim = 2**n_spins
    if dim > DENSE_HILBERT_LIMIT:
        raise CapacityError(dim, DENSE_HILBERT_LIMIT)

    ops = []
    for i in range(n_spins):
        triple = []
        for single in (_SX, _SY, _SZ):
            factors = [_E2] * n_spins
            factors[i] = single
            triple.append(reduce(np.kron, factors))
        ops.append((triple[0], triple[1], triple[2]))
    return ops


def build_drift(spec: SpinChainSpec, spectrometer_mhz: float = 600.0) -> np.ndarray:
    """
    Drift Hamiltonian of the chain in rad/s.

    H0 = Σ_i 2π·ν_i·Sz_i + Σ_i 2π·J·(S_i · S_{i+1})
    """
    ops = spin_operators(spec.n_spins)
    dim = 2**spec.n_spins
    h0 = np.zeros((dim, dim), dtype=complex)

    for offset, (_, _, sz) in zip(spec.offsets_in_hz(spectrometer_mhz), ops):
        h0 += TWO_PI * offset * sz

    for (ax, ay, az), (bx, by, bz) in zip(ops[:-1], ops[1:]):
        h0 += TWO_PI * spec.j_hz * (ax @ bx + ay @ by + az @ bz)
    return h0


def build_controls(n_spins: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Collective x and y control Hamiltonians in rad/s per Hz of nutation.
    """
    ops = spin_operators(n_spins)
    hx = TWO_PI * sum(sx for sx, _, _ in ops)
    hy = TWO_PI * sum(sy for _, sy, _ in ops)
    return np.asarray(hx, dtype=complex), np.asarray(hy, dtype=complex)


def build_hamiltonians(spec: SpinChainSpec, spectrometer_mhz: float = 600.0) -> HamiltonianSet:
    """Drift plus the two collective controls as a HamiltonianSet."""
    log.debug("spinsys.build", n_spins=spec.n_spins, j_hz=spec.j_hz, dim=2**spec.n_spins)
    return HamiltonianSet(
        h0=build_drift(spec, spectrometer_mhz), controls=build_controls(spec.n_spins)
    )


def to_liouvillian(h: np.ndarray, r: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Lift a Hamiltonian (and optional relaxation matrix) to Liouville space.

    Returns:
        E⊗H − Hᵀ⊗E + iR
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise DimensionMismatchError(f"Hamiltonian must be square, got shape {h.shape}")
    d = h.shape[0]
    e = np.eye(d, dtype=complex)
    lv = np.kron(e, h) - np.kron(h.T, e)
    if r is not None:
        r = np.asarray(r)
        if r.shape != (d * d, d * d):
            raise DimensionMismatchError(
                f"Relaxation matrix has shape {r.shape}, expected {(d * d, d * d)}"
            )
        lv = lv + 1j * r
    return lv


def build_liouvillians(
    hamiltonians: HamiltonianSet, relaxation: Optional[np.ndarray] = None
) -> LiouvillianSet:
    """Lift drift (with relaxation) and controls into Liouville space."""
    size = hamiltonians.dim**2
    r = np.zeros((size, size), dtype=complex) if relaxation is None else relaxation
    return LiouvillianSet(
        l0=to_liouvillian(hamiltonians.h0, r),
        controls=tuple(to_liouvillian(hk) for hk in hamiltonians.controls),
        relaxation=r,
    )


def uniform_damping(hilbert_dim: int, rate: float) -> np.ndarray:
    """
    Relaxation matrix damping every component except the unit-trace one.

    Args:
        hilbert_dim: Hilbert-space dimension d
        rate: Damping rate in 1/s

    Returns:
        R = −rate·(1 − |e⟩⟨e|) with e = vec(E)/‖vec(E)‖
    """
    if rate < 0:
        raise ValueError(f"rate must be nonnegative, got {rate}")
    e = vectorize(np.eye(hilbert_dim, dtype=complex)) / np.sqrt(hilbert_dim)
    size = hilbert_dim * hilbert_dim
    return -rate * (np.eye(size, dtype=complex) - np.outer(e, e.conj()))


def chain_offsets(n_spins: int, span_ppm: float, center_ppm: float = 0.0) -> List[float]:
    """Offsets (ppm) spread at regular intervals over span_ppm."""
    if n_spins == 1:
        return [center_ppm]
    return list(np.linspace(center_ppm - span_ppm / 2, center_ppm + span_ppm / 2, n_spins))


def vectorize(rho: np.ndarray) -> np.ndarray:
    """Stack the columns of a square matrix."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionMismatchError(f"Cannot vectorize non-square matrix of shape {rho.shape}")
    return rho.reshape(-1, order="F").astype(complex)


def devectorize(v: np.ndarray) -> np.ndarray:
    """Inverse of vectorize."""
    v = np.asarray(v)
    d = int(round(np.sqrt(v.size)))
    if d * d != v.size:
        raise DimensionMismatchError(f"Vector length {v.size} is not a perfect square")
    return v.reshape((d, d), order="F")
