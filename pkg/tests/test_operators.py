import numpy as np
import pytest
from hypothesis import given, strategies as st

from pulseforge._validation import ContractError, PropagationError
from pulseforge.operators import (SX, SY, SZ, TimeGrid, expm_hermitian, kron, mhz, ordered_product, propagate, rx,
                                  su2_propagate, to_mhz, trace_fidelity)

from conftest import random_hermitian


def test_mhz_is_angular_per_ns():
    assert mhz(1.0) == pytest.approx(2 * np.pi * 1e-3)
    assert to_mhz(mhz(58.0)) == pytest.approx(58.0)


def test_expm_diagonal():
    u = expm_hermitian(SZ * np.pi / 2, 1.0)
    assert np.allclose(u, np.diag([np.exp(-1j * np.pi / 2), np.exp(1j * np.pi / 2)]), atol=1e-14)


def test_expm_zero_is_identity():
    assert np.allclose(expm_hermitian(np.zeros((3, 3)), 7.3), np.eye(3))


def test_expm_sigma_x_closed_form():
    assert np.allclose(expm_hermitian(SX * np.pi / 2, 1.0), -1j * SX, atol=1e-12)


def test_expm_rejects_non_hermitian():
    with pytest.raises(ContractError):
        expm_hermitian(np.array([[0, 1], [0, 0]]), 1.0)


@given(st.integers(2, 6), st.floats(0.01, 10.0), st.integers(0, 2**31 - 1))
def test_expm_unitary(d, dt, seed):
    u = expm_hermitian(random_hermitian(np.random.default_rng(seed), d, 3.0), dt)
    assert np.max(np.abs(u.conj().T @ u - np.eye(d))) < 1e-9


def test_time_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(1.0, 1)
    with pytest.raises(ValueError):
        TimeGrid(-1.0, 10)
    g = TimeGrid(2.0, 4)
    assert g.dt == 0.5 and np.allclose(g.midpoints, [0.25, 0.75, 1.25, 1.75])


def test_constant_rabi_pi_pulse():
    T = 10.0
    u = propagate(lambda t: (np.pi / T / 2) * SX, TimeGrid(T, 16)).final
    assert np.allclose(u, -1j * SX, atol=1e-12)


def test_raised_cosine_area_law():
    T = 20.0

    def h(t):
        om = np.pi / T * (1 - np.cos(2 * np.pi * np.asarray(t) / T))
        return om[..., None, None] * SX / 2

    u = propagate(h, TimeGrid(T, 512)).final
    fine = propagate(h, TimeGrid(T, 100_000)).final
    assert np.allclose(fine, -1j * SX, atol=1e-9)
    assert np.max(np.abs(u - fine)) < 1e-9


def test_nan_hamiltonian_reports_time():
    def h(t):
        return np.nan * SX if t > 0.5 else SX

    with pytest.raises(PropagationError, match="t = "):
        propagate(h, TimeGrid(1.0, 4))


def _random_drive(seed, d=3):
    rng = np.random.default_rng(seed)
    a, b = random_hermitian(rng, d), random_hermitian(rng, d)
    w = rng.uniform(0.5, 2.0)
    return lambda t: a + np.cos(w * np.asarray(t))[..., None, None] * b


@given(st.integers(0, 2**31 - 1))
def test_random_propagation_unitary(seed):
    u = propagate(_random_drive(seed), TimeGrid(5.0, 64)).final
    assert np.max(np.abs(u.conj().T @ u - np.eye(3))) < 1e-9


def test_composition_over_halves():
    h = _random_drive(7)
    full = propagate(h, TimeGrid(4.0, 400)).final
    first = propagate(h, TimeGrid(2.0, 200)).final
    second = propagate(h, TimeGrid(2.0, 200, t0=2.0)).final
    assert np.allclose(second @ first, full, atol=1e-12)


def test_second_order_convergence():
    h = _random_drive(3)
    ns = np.array([20, 200, 2000])
    errs = []
    for n in ns:
        u = propagate(h, TimeGrid(5.0, n)).final
        fine = propagate(h, TimeGrid(5.0, 10 * n)).final
        errs.append(np.max(np.abs(u - fine)))
    slope = -np.polyfit(np.log(ns), np.log(errs), 1)[0]
    assert abs(slope - 2) < 0.3


def test_keep_path_matches_final():
    prop = propagate(_random_drive(1), TimeGrid(3.0, 50), keep_path=True)
    assert prop.path.shape == (51, 3, 3)
    assert np.allclose(prop.path[0], np.eye(3)) and np.allclose(prop.path[-1], prop.final)


def test_su2_matches_general_propagator(rng):
    n, dt = 300, 0.01
    hx, hy, hz = rng.normal(size=(3, n))
    steps = [expm_hermitian(a * SX + b * SY + c * SZ, dt) for a, b, c in zip(hx, hy, hz)]
    u = np.eye(2)
    for s in steps:
        u = s @ u
    assert np.allclose(su2_propagate(hx, hy, hz, dt), u, atol=1e-12)
    final, path = su2_propagate(hx, hy, hz, dt, keep_path=True)
    assert np.allclose(final, u, atol=1e-12) and path.shape == (n + 1, 2, 2)


def test_ordered_product_odd_length(rng):
    mats = rng.normal(size=(7, 2, 2))
    ref = np.eye(2)
    for m in mats:
        ref = m @ ref
    assert np.allclose(ordered_product(mats), ref)


def test_fidelity_identity_case():
    v = rx(0.3)
    assert trace_fidelity(v, v) == 1.0


def test_fidelity_small_z_error():
    eps = 0.02
    u = expm_hermitian(eps * SZ / 2, 1.0) @ SX
    assert trace_fidelity(u, SX) == pytest.approx(np.cos(eps / 2), abs=1e-14)


def test_fidelity_global_phase_free():
    assert trace_fidelity(1j * SX, SX) == pytest.approx(1.0)
    assert trace_fidelity(rx(np.pi), SX) == pytest.approx(1.0)


def test_fidelity_block_phases():
    u = np.diag([1, 1, 1j, 1j])
    assert trace_fidelity(u, np.eye(4)) < 0.75
    assert trace_fidelity(u, np.eye(4), phase_blocks=[[0, 1], [2, 3]]) == pytest.approx(1.0)


def test_fidelity_local_phases():
    zz = np.diag(np.exp(1j * np.array([0.0, 0.4, -0.7, -0.3])))
    assert trace_fidelity(zz, np.eye(4), local_phases=2) == pytest.approx(1.0, abs=1e-9)


def test_fidelity_subspace_errors():
    with pytest.raises(ValueError):
        trace_fidelity(np.eye(3), np.eye(2), subspace=[])
    with pytest.raises(ValueError):
        trace_fidelity(np.eye(3), np.eye(2), subspace=[0, 5])


@given(st.integers(0, 2**31 - 1))
def test_fidelity_bounds(seed):
    rng = np.random.default_rng(seed)
    u = expm_hermitian(random_hermitian(rng, 4), 1.0)
    v = expm_hermitian(random_hermitian(rng, 4), 1.0)
    f = trace_fidelity(u, v)
    assert 0.0 <= f <= 1.0
    assert trace_fidelity(u, u) == pytest.approx(1.0)


def test_kron_order():
    assert np.allclose(kron(SZ, np.eye(2))[2:, 2:], -np.eye(2))
