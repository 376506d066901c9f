"""
Test spin operators, Hamiltonians and their Liouville-space lifts.
"""

import numpy as np
import pytest
from pydantic import ValidationError

from grape_engine.config.settings import SpinChainSpec
from grape_engine.core.spinsys import (
    HamiltonianSet,
    TWO_PI,
    build_controls,
    build_drift,
    build_hamiltonians,
    build_liouvillians,
    chain_offsets,
    devectorize,
    is_hermitian,
    spin_operators,
    to_liouvillian,
    uniform_damping,
    vectorize,
)
from grape_engine.errors import CapacityError, DimensionMismatchError


def random_hermitian(rng: np.random.Generator, d: int) -> np.ndarray:
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (m + m.conj().T) / 2


def test_single_spin_operators():
    """n=1 gives half the Pauli matrices."""
    ((sx, sy, sz),) = spin_operators(1)
    assert np.allclose(sx, 0.5 * np.array([[0, 1], [1, 0]]))
    assert np.allclose(sy, 0.5 * np.array([[0, -1j], [1j, 0]]))
    assert np.allclose(sz, 0.5 * np.array([[1, 0], [0, -1]]))


def test_spin_algebra_on_chain():
    """[Sx_i, Sy_i] = i·Sz_i and operators on distinct spins commute."""
    ops = spin_operators(3)
    for i, (sx, sy, sz) in enumerate(ops):
        assert sx.shape == (8, 8)
        assert all(is_hermitian(m) for m in (sx, sy, sz))
        assert np.allclose(sx @ sy - sy @ sx, 1j * sz)
        for j, other in enumerate(ops):
            if j == i:
                continue
            for a in (sx, sy, sz):
                for b in other:
                    assert np.allclose(a @ b, b @ a)


def test_capacity_limit():
    with pytest.raises(CapacityError) as exc:
        spin_operators(7)
    assert exc.value.dimension == 128


def test_drift_single_spin_offset():
    """A lone spin at 100 Hz has H0 = 2π·100·Sz."""
    spec = SpinChainSpec(n_spins=1, offsets_hz=[100.0])
    h0 = build_drift(spec)
    assert np.allclose(h0, np.diag([TWO_PI * 50.0, -TWO_PI * 50.0]))


def test_drift_coupling_conserves_total_sz():
    """Isotropic couplings commute with the total Sz."""
    spec = SpinChainSpec(n_spins=3, offsets_hz=[0.0, 0.0, 0.0], j_hz=15.0)
    h0 = build_drift(spec)
    total_sz = sum(sz for _, _, sz in spin_operators(3))
    assert np.allclose(h0 @ total_sz, total_sz @ h0)
    assert not np.allclose(h0, 0)


def test_controls_are_collective_and_carry_two_pi():
    hx, hy = build_controls(2)
    ops = spin_operators(2)
    assert np.allclose(hx, TWO_PI * (ops[0][0] + ops[1][0]))
    assert np.allclose(hy, TWO_PI * (ops[0][1] + ops[1][1]))


def test_offsets_in_ppm_are_scaled():
    spec = SpinChainSpec(n_spins=2, offsets_ppm=[1.0, -2.0])
    assert spec.offsets_in_hz(600.0) == [600.0, -1200.0]


def test_chain_offsets_spread():
    assert chain_offsets(1, 8.0) == [0.0]
    offsets = chain_offsets(5, 8.0)
    assert offsets[0] == pytest.approx(-4.0)
    assert offsets[-1] == pytest.approx(4.0)
    assert np.allclose(np.diff(offsets), 2.0)


def test_span_ppm_spreads_chain_offsets():
    spec = SpinChainSpec(n_spins=3, span_ppm=8.0, center_ppm=1.0)
    assert np.allclose(spec.offsets_in_hz(600.0), [-1800.0, 600.0, 3000.0])
    drift = build_drift(spec, spectrometer_mhz=600.0)
    assert np.allclose(drift, build_drift(SpinChainSpec(n_spins=3, offsets_ppm=[-3.0, 1.0, 5.0])))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n_spins": 2, "offsets_hz": [0.0]},
        {"n_spins": 0, "offsets_hz": []},
        {"n_spins": 1, "offsets_hz": [0.0], "offsets_ppm": [0.0]},
        {"n_spins": 2, "offsets_hz": [0.0, 0.0], "span_ppm": 4.0},
        {"n_spins": 2, "span_ppm": -1.0},
        {"n_spins": 1, "offsets_hz": [0.0], "b1_max_hz": -1.0},
        {"n_spins": 1, "offsets_hz": [float("nan")]},
    ],
)
def test_chain_spec_validation(kwargs):
    with pytest.raises(ValidationError):
        SpinChainSpec(**kwargs)


def test_hamiltonian_set_rejects_non_hermitian():
    h = np.array([[0, 1], [0, 0]], dtype=complex)
    with pytest.raises(ValueError):
        HamiltonianSet(h0=h, controls=())
    with pytest.raises(DimensionMismatchError):
        HamiltonianSet(h0=np.eye(2), controls=(np.eye(4),))


def test_hamiltonian_total():
    hams = build_hamiltonians(SpinChainSpec(n_spins=1, offsets_hz=[10.0]))
    total = hams.total([3.0, -2.0])
    assert np.allclose(total, hams.h0 + 3.0 * hams.controls[0] - 2.0 * hams.controls[1])


def test_vectorize_stacks_columns():
    m = np.array([[1, 2], [3, 4]])
    assert np.array_equal(vectorize(m), np.array([1, 3, 2, 4], dtype=complex))
    assert np.array_equal(devectorize(vectorize(m)), m.astype(complex))
    with pytest.raises(DimensionMismatchError):
        vectorize(np.zeros((2, 3)))
    with pytest.raises(DimensionMismatchError):
        devectorize(np.zeros(3))


def test_liouvillian_acts_as_commutator():
    """L·vec(ρ) = vec(Hρ − ρH)."""
    rng = np.random.default_rng(1)
    h = random_hermitian(rng, 4)
    rho = random_hermitian(rng, 4)
    lv = to_liouvillian(h)
    assert np.allclose(lv @ vectorize(rho), vectorize(h @ rho - rho @ h))
    assert is_hermitian(lv)


def test_liouvillian_eigenvalues_are_level_differences():
    """The spectrum of the commutator superoperator is {λr − λs}."""
    rng = np.random.default_rng(3)
    h = random_hermitian(rng, 4)
    levels = np.linalg.eigvalsh(h)
    expected = np.sort((levels[:, None] - levels[None, :]).ravel())
    found = np.sort(np.linalg.eigvalsh(to_liouvillian(h, np.zeros((16, 16)))))
    assert np.allclose(found, expected)


def test_liouvillian_with_relaxation():
    rng = np.random.default_rng(2)
    h = random_hermitian(rng, 2)
    r = uniform_damping(2, 3.0)
    lv = to_liouvillian(h, r)
    assert np.allclose(lv, to_liouvillian(h) + 1j * r)
    with pytest.raises(DimensionMismatchError):
        to_liouvillian(h, np.zeros((3, 3)))


def test_liouvillian_set_flags_relaxation():
    hams = build_hamiltonians(SpinChainSpec(n_spins=2, offsets_hz=[100.0, -50.0], j_hz=5.0))
    plain = build_liouvillians(hams)
    assert not plain.has_relaxation
    assert plain.dim == 16
    assert plain.hilbert_dim == 4
    assert is_hermitian(plain.l0)
    assert all(is_hermitian(lk) for lk in plain.controls)

    damped = build_liouvillians(hams, uniform_damping(4, 1.5))
    assert damped.has_relaxation
    assert not is_hermitian(damped.l0)


def test_uniform_damping_keeps_identity_component():
    """The unit-trace part is untouched, traceless parts decay at the given rate."""
    rate = 4.0
    r = uniform_damping(2, rate)
    ((_, _, sz),) = spin_operators(1)
    assert np.allclose(r @ vectorize(np.eye(2)), 0)
    assert np.allclose(r @ vectorize(sz), -rate * vectorize(sz))
    with pytest.raises(ValueError):
        uniform_damping(2, -1.0)
