"""
Matrix Exponential Kernel

Scaled-and-squared Taylor exponential and three routes to its directional
derivative d/dc exp(−i(L + c·L_k)Δt) at c = 0:

- commutator (γ) series, with the product-rule squaring recursion
- eigendecomposition of a Hermitian generator (Hadamard form)
- finite differences, with round-off bounded step selection

Only power series are used; rational approximants would need matrix
inversions. All functions are pure.
"""

import math
from dataclasses import dataclass
from typing import Literal, Optional, Tuple, Union

import numpy as np
import scipy.linalg
import structlog

from grape_engine.config.settings import ExpmOptions, FdStepPolicy
from grape_engine.core.spinsys import is_hermitian, to_liouvillian
from grape_engine.errors import (
    DimensionMismatchError,
    InfeasibleThresholdError,
    InvalidMethodError,
    SeriesDivergenceError,
)

log = structlog.get_logger(__name__)

FdScheme = Literal["forward", "central", "central4"]

DEFAULT_OPTIONS = ExpmOptions()

# Below this |z| the closed form (e^z − 1)/z loses digits to cancellation.
GAMMA_CROSSOVER = 1e-2
_GAMMA_SMALL_TERMS = 10


@dataclass(frozen=True)
class DerivativePair:
    """Step propagator and its derivative with respect to one amplitude."""

    propagator: np.ndarray
    derivative: np.ndarray
    terms: int = 0
    squarings: int = 0


def one_norm(a: np.ndarray) -> float:
    """Maximum absolute column sum."""
    return float(np.linalg.norm(a, 1)) if a.size else 0.0


def scaling_exponent(a: np.ndarray, threshold: float) -> int:
    """Smallest s ≥ 0 with ‖a‖₁ / 2**s ≤ threshold."""
    norm = one_norm(a)
    if norm <= threshold:
        return 0
    s = max(0, math.ceil(math.log2(norm / threshold)))
    while norm / 2**s > threshold:
        s += 1
    return s


def _check_square(a: np.ndarray, name: str) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got shape {a.shape}")


def _taylor_exp(a: np.ndarray, opts: ExpmOptions) -> Tuple[np.ndarray, int]:
    result = np.eye(a.shape[0], dtype=complex) + a
    term = a
    for m in range(2, opts.max_terms + 1):
        term = term @ a / m
        result = result + term
        if one_norm(term) <= opts.taylor_tol * one_norm(result):
            return result, m
    raise SeriesDivergenceError("Taylor exponential", opts.max_terms, one_norm(term))


def _scaled_exp(a: np.ndarray, opts: ExpmOptions) -> Tuple[np.ndarray, int]:
    s = scaling_exponent(a, opts.scaling_threshold)
    result, _ = _taylor_exp(a / 2**s, opts)
    for _ in range(s):
        result = result @ result
    return result, s


def expm(a: np.ndarray, opts: Optional[ExpmOptions] = None, scale: bool = True) -> np.ndarray:
    """
    Matrix exponential by scaled-and-squared Taylor series.

    Args:
        a: Square matrix with finite entries
        opts: Series options
        scale: Apply scaling and squaring (disable only for accuracy studies)

    Returns:
        exp(a)

    Raises:
        SeriesDivergenceError: If the series does not converge within
            opts.max_terms at the scaled norm
    """
    opts = opts or DEFAULT_OPTIONS
    a = np.asarray(a, dtype=complex)
    _check_square(a, "a")
    if not np.all(np.isfinite(a)):
        raise ValueError("expm argument has non-finite entries")

    if not scale:
        return _taylor_exp(a, opts)[0]
    result, s = _scaled_exp(a, opts)
    log.debug("expkernel.expm", dim=a.shape[0], squarings=s)
    return result


def gamma_scalar(z: Union[complex, np.ndarray]) -> Union[complex, np.ndarray]:
    """
    γ(z) = (e^z − 1)/z, with γ(0) = 1.

    Accepts scalars or arrays; small |z| uses Σ zⁿ/(n+1)!.
    """
    arr = np.atleast_1d(np.asarray(z, dtype=complex))
    out = np.empty_like(arr)
    small = np.abs(arr) < GAMMA_CROSSOVER

    zs = arr[small]
    acc = np.zeros_like(zs)
    power = np.ones_like(zs)
    for n in range(_GAMMA_SMALL_TERMS):
        acc = acc + power / math.factorial(n + 1)
        power = power * zs
    out[small] = acc

    zl = arr[~small]
    out[~small] = np.expm1(zl) / zl

    if np.ndim(z) == 0:
        return complex(out[0])
    return out.reshape(np.shape(z))


def gamma_taylor(z: complex, order: int) -> complex:
    """Truncated series Σ_{n<order} zⁿ/(n+1)! of γ(z)."""
    total = 0.0 + 0.0j
    power = 1.0 + 0.0j
    for n in range(order):
        total += power / math.factorial(n + 1)
        power *= z
    return total


def commutator_series(
    a: np.ndarray,
    b: np.ndarray,
    opts: Optional[ExpmOptions] = None,
    n_terms: Optional[int] = None,
) -> Tuple[np.ndarray, int]:
    """
    γ[−ad_A](B) = Σ_m (−1)^m/(m+1)! [A, B]_m by nested commutators.

    With A = −iLΔt and B = −iL_kΔt each term equals
    −(iΔt)^{m+1}/(m+1)!·[L, L_k]_m.

    Args:
        a: Generator A
        b: Direction B
        opts: Tolerance and term cap for the adaptive sum
        n_terms: Sum exactly this many terms, with no convergence check

    Returns:
        (series sum, number of terms used)
    """
    opts = opts or DEFAULT_OPTIONS
    term = np.asarray(b, dtype=complex)
    total = term.copy()

    if n_terms is not None:
        if n_terms < 1:
            raise ValueError(f"n_terms must be >= 1, got {n_terms}")
        for m in range(1, n_terms):
            term = -(a @ term - term @ a) / (m + 1)
            total = total + term
        return total, n_terms

    if one_norm(term) == 0.0:
        return total, 1
    for m in range(1, opts.max_terms):
        term = -(a @ term - term @ a) / (m + 1)
        total = total + term
        if one_norm(term) <= opts.taylor_tol * one_norm(total):
            return total, m + 1
    raise SeriesDivergenceError("Commutator", opts.max_terms, one_norm(term))


def dexp_series(
    l: np.ndarray,
    lk: np.ndarray,
    dt: float,
    opts: Optional[ExpmOptions] = None,
    n_terms: Optional[int] = None,
    scale: bool = True,
) -> DerivativePair:
    """
    Propagator exp(−iLΔt) and its derivative along L_k by commutator series.

    When ‖−iLΔt‖₁ exceeds the scaling threshold the pair is computed at
    the generator halved s times and assembled with the product rule
    D ← P·D + D·P, P ← P² applied s times.

    Args:
        l: Generator L
        lk: Control generator L_k
        dt: Step duration (s)
        opts: Series options
        n_terms: Keep exactly this many commutator terms, unscaled
        scale: Apply scaling and squaring to the adaptive series

    Raises:
        SeriesDivergenceError: If the adaptive series does not converge
    """
    opts = opts or DEFAULT_OPTIONS
    l = np.asarray(l, dtype=complex)
    lk = np.asarray(lk, dtype=complex)
    _check_square(l, "l")
    if lk.shape != l.shape:
        raise DimensionMismatchError(f"lk has shape {lk.shape}, expected {l.shape}")
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")

    a = -1j * dt * l
    b = -1j * dt * lk

    if n_terms is not None:
        propagator, _ = _scaled_exp(a, opts)
        factor, terms = commutator_series(a, b, opts, n_terms=n_terms)
        return DerivativePair(propagator, propagator @ factor, terms, 0)

    s = scaling_exponent(a, opts.scaling_threshold) if scale else 0
    a_s = a / 2**s
    b_s = b / 2**s
    propagator, _ = _taylor_exp(a_s, opts)
    factor, terms = commutator_series(a_s, b_s, opts)
    derivative = propagator @ factor
    for _ in range(s):
        derivative = propagator @ derivative + derivative @ propagator
        propagator = propagator @ propagator
    return DerivativePair(propagator, derivative, terms, s)


@dataclass(frozen=True)
class EigenFrame:
    """Eigendecomposition H = V·Λ·V† of a Hermitian generator."""

    values: np.ndarray
    vectors: np.ndarray

    @classmethod
    def of(cls, h: np.ndarray) -> "EigenFrame":
        h = np.asarray(h, dtype=complex)
        if not is_hermitian(h):
            raise InvalidMethodError(
                "Eigendecomposition derivative requires a Hermitian generator "
                "(not valid with relaxation)"
            )
        values, vectors = scipy.linalg.eigh(h)
        return cls(values=values, vectors=vectors)

    def propagator(self, dt: float) -> np.ndarray:
        phases = np.exp(-1j * self.values * dt)
        return (self.vectors * phases) @ self.vectors.conj().T

    def derivative_factor(self, hk: np.ndarray, dt: float) -> np.ndarray:
        """D = V·(G ∘ B)·V†, G_rs = γ[i(λ_r − λ_s)Δt], B = V†(−iH_kΔt)V."""
        v = self.vectors
        b = v.conj().T @ (-1j * dt * np.asarray(hk, dtype=complex)) @ v
        g = gamma_scalar(1j * dt * (self.values[:, None] - self.values[None, :]))
        return v @ (g * b) @ v.conj().T


def dexp_eig(h: np.ndarray, hk: np.ndarray, dt: float) -> np.ndarray:
    """
    Hilbert-space derivative factor D of exp(−iHΔt) along H_k.

    The propagator derivative is exp(−iHΔt)·D; its Liouville lift is
    lift_derivative(D).

    Raises:
        InvalidMethodError: If h or hk is not Hermitian
    """
    hk = np.asarray(hk, dtype=complex)
    if hk.shape != np.shape(h):
        raise DimensionMismatchError(f"hk has shape {hk.shape}, expected {np.shape(h)}")
    if not is_hermitian(hk):
        raise InvalidMethodError("Control Hamiltonian must be Hermitian")
    return EigenFrame.of(h).derivative_factor(hk, dt)


def lift_derivative(d: np.ndarray) -> np.ndarray:
    """Liouville lift E⊗D − Dᵀ⊗E of a Hilbert-space derivative factor."""
    return to_liouvillian(d)


def dexp_fd(
    l: np.ndarray,
    lk: np.ndarray,
    dt: float,
    h_step: float,
    scheme: FdScheme = "central",
    opts: Optional[ExpmOptions] = None,
    base: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Finite-difference derivative of exp(−i(L + c·L_k)Δt) at c = 0.

    Args:
        l: Generator L
        lk: Control generator L_k
        dt: Step duration (s)
        h_step: Finite-difference step in amplitude units
        scheme: ``forward`` (O(h)), ``central`` (O(h²)) or ``central4`` (O(h⁴))
        opts: Exponential options
        base: Already computed exp(−iLΔt), reused by the forward scheme
    """
    if h_step <= 0:
        raise ValueError(f"h_step must be positive, got {h_step}")
    l = np.asarray(l, dtype=complex)
    lk = np.asarray(lk, dtype=complex)
    if lk.shape != l.shape:
        raise DimensionMismatchError(f"lk has shape {lk.shape}, expected {l.shape}")

    def shifted(c: float) -> np.ndarray:
        return expm(-1j * dt * (l + c * lk), opts)

    if scheme == "forward":
        p0 = base if base is not None else shifted(0.0)
        return (shifted(h_step) - p0) / h_step
    if scheme == "central":
        return (shifted(h_step) - shifted(-h_step)) / (2.0 * h_step)
    if scheme == "central4":
        return (
            -shifted(2.0 * h_step)
            + 8.0 * shifted(h_step)
            - 8.0 * shifted(-h_step)
            + shifted(-2.0 * h_step)
        ) / (12.0 * h_step)
    raise ValueError(f"Unknown finite-difference scheme: {scheme}")


def fd_step_select(policy: FdStepPolicy, f_norm: float) -> float:
    """
    Smallest step whose round-off bound meets the policy threshold.

    Solves (2ε_A + ε_M·|f|)/h + ε_M·|f′| = threshold for h.

    Raises:
        InfeasibleThresholdError: If threshold ≤ ε_M·|f′|
    """
    if f_norm < 0:
        raise ValueError(f"f_norm must be nonnegative, got {f_norm}")
    floor = policy.eps_m * policy.fprime_estimate
    if policy.error_threshold <= floor:
        raise InfeasibleThresholdError(
            f"Error threshold {policy.error_threshold:.3e} is at or below the "
            f"round-off floor {floor:.3e}"
        )
    return (2.0 * policy.eps_a + policy.eps_m * f_norm) / (policy.error_threshold - floor)


def fd_error_bound(policy: FdStepPolicy, h_step: float, f_norm: float, fprime: float) -> float:
    """Round-off bound (2ε_A + ε_M·|f|)/|h| + ε_M·|f′| for a given step."""
    return (2.0 * policy.eps_a + policy.eps_m * f_norm) / abs(h_step) + policy.eps_m * abs(
        fprime
    )


def validate_fd_step(policy: FdStepPolicy, h_step: float, f_norm: float, fprime: float) -> bool:
    """A-posteriori check of a step using the finite-difference |f′| estimate."""
    return fd_error_bound(policy, h_step, f_norm, fprime) <= policy.error_threshold
