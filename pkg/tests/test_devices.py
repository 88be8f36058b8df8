import numpy as np
import pytest
from hypothesis import given, strategies as st

from pulseforge._validation import CapacityError, ContractError
from pulseforge.devices import (BipartitePair, Coupling, Node, TransmonChain, build_hamiltonian, chain_from_dict,
                                chain_to_dict, dressed_basis, effective_splitting, eq_dipole_matrix, fig2_chain,
                                fig4_pair, perturbative_splitting, spectated_total_hamiltonian)
from pulseforge.operators import TimeGrid, ghz, mhz, propagate, to_mhz
from pulseforge.pulses import Pulse

PAIRS = st.builds(lambda wi, wt, g: BipartitePair(ghz(wi), ghz(wt), mhz(g)),
                  st.floats(4.0, 7.0), st.floats(4.0, 7.0), st.floats(-200.0, 200.0).filter(lambda g: abs(g) > 1))


def test_decoupled_dressed_ladder():
    pair = BipartitePair(ghz(5.5), ghz(5.0), 0.0)
    m = eq_dipole_matrix(pair)
    assert abs(m[1, 0]) == pytest.approx(1.0) and abs(m[3, 2]) == pytest.approx(1.0)
    assert m[2, 0] == 0 and m[3, 1] == 0
    assert effective_splitting(pair) == pytest.approx(0.0, abs=1e-12)


def test_resonant_entries():
    g = mhz(50.0)
    pair = BipartitePair(ghz(5.0), ghz(5.0), g)
    assert pair.epsilon == pytest.approx(2 * g)
    assert pair.upsilon_plus == pytest.approx(2 * np.sqrt(2) * g)
    m = np.abs(eq_dipole_matrix(pair))
    assert np.allclose(m[m > 0], 1 / np.sqrt(2))


def test_weak_coupling_homogeneous_dipole():
    pair = BipartitePair(ghz(6.0), ghz(5.0), mhz(1.0))
    m = np.abs(eq_dipole_matrix(pair))
    assert m[2, 0] < 1e-3 and m[3, 1] < 1e-3
    assert m[1, 0] > 0.999 and m[3, 2] > 0.999


def test_degenerate_pair_raises():
    with pytest.raises(ContractError):
        dressed_basis(BipartitePair(1.0, 1.0, 0.0))


@given(PAIRS)
def test_dressed_basis_diagonalises(pair):
    db = dressed_basis(pair)
    v = db.transform
    assert np.max(np.abs(v.conj().T @ v - np.eye(4))) < 1e-10
    h = v.conj().T @ pair.hamiltonian("exchange") @ v
    assert np.max(np.abs(h - np.diag(db.h_diag))) < 1e-10
    assert np.allclose(np.abs(db.ladder), np.abs(eq_dipole_matrix(pair)), atol=1e-10)


@given(PAIRS)
def test_dipole_normalisation(pair):
    d, eps, g = pair.detuning, pair.epsilon, pair.g
    assert ((d + eps) / pair.upsilon_plus) ** 2 + (2 * g / pair.upsilon_plus) ** 2 == pytest.approx(1.0)
    assert ((eps - d) / pair.upsilon_minus) ** 2 + (2 * g / pair.upsilon_minus) ** 2 == pytest.approx(1.0)
    assert eps >= abs(d) and pair.upsilon_plus > 0 and pair.upsilon_minus > 0


@pytest.mark.parametrize("g_mhz", [5.0, 20.0, 40.0])
def test_splitting_vs_perturbation(g_mhz):
    # detuning 1 GHz keeps g / Delta <= 0.05
    nodes = (Node("i", ghz(6.0), mhz(250.0), 3), Node("t", ghz(5.0), mhz(250.0), 3))
    ch = TransmonChain(nodes, (Coupling(("i", "t"), mhz(g_mhz)),), target="t", intruder="i")
    exact, pert = effective_splitting(ch), perturbative_splitting(ch)
    # fourth-order remainder
    assert abs(exact - pert) < 100 * (mhz(g_mhz) / ghz(1.0)) ** 4 * ghz(1.0)


@given(PAIRS)
def test_two_level_pair_splitting_closed_form(pair):
    # xx coupling splits into {00, 11} and {01, 10} blocks with energies
    # +-sqrt(S^2/4 + g^2) and +-sqrt(D^2/4 + g^2): the conditional shift cancels
    assert abs(effective_splitting(pair)) < 1e-9 * ghz(1.0)


def test_splitting_symmetric_under_target_swap():
    ch = fig2_chain()
    swapped = effective_splitting(ch, target=ch.intruder, intruder=ch.target)
    assert swapped == pytest.approx(effective_splitting(ch), rel=1e-9)


def test_fig2_chain_dimensions_and_splitting():
    ch = fig2_chain()
    assert ch.dim == 27
    h = build_hamiltonian(ch)(0.0)
    assert h.shape == (27, 27)
    assert to_mhz(effective_splitting(ch)) == pytest.approx(-7.669, abs=0.01)


def test_uncoupled_ladder_energies():
    nodes = (Node("a", 1.0, 0.2, 4), Node("b", 1.7, 0.1, 3))
    h = TransmonChain(nodes).static_hamiltonian()
    assert np.allclose(h, np.diag(np.diag(h)))
    n = np.arange(4)
    ea = 1.0 * n - 0.1 * n * (n - 1)
    assert np.allclose(np.real(np.diag(h))[::3], ea)


def test_fig4_pair_parameters():
    ch = fig4_pair(58.0)
    assert ch.dims == (4, 4)
    s, t = ch.nodes
    assert to_mhz(s.omega) == pytest.approx(5000) and to_mhz(t.alpha) == pytest.approx(260)
    assert effective_splitting(ch) < 0
    assert abs(effective_splitting(fig4_pair(100.0))) > abs(effective_splitting(ch))


def test_capacity_cap():
    nodes = tuple(Node(f"q{i}", 1.0, 0.1, 3) for i in range(4))
    with pytest.raises(CapacityError):
        TransmonChain(nodes)


def test_chain_json_round_trip():
    ch = fig2_chain()
    again = chain_from_dict(chain_to_dict(ch))
    assert np.allclose(again.static_hamiltonian(), ch.static_hamiltonian())
    assert again.target == ch.target


def test_chain_document_rejects_two_level_transmon():
    doc = chain_to_dict(fig2_chain())
    doc["nodes"][0]["levels"] = 2
    with pytest.raises(ValueError):
        chain_from_dict(doc)


def test_frame_transform_preserves_populations():
    nodes = (Node("i", ghz(1.3), mhz(250.0), 3), Node("t", ghz(1.0), mhz(250.0), 3))
    ch = TransmonChain(nodes, (Coupling(("i", "t"), mhz(30.0)),), target="t", intruder="i")
    wd = ch.drive_frequency()
    pulse = Pulse.cosine(np.pi / 2, 20.0, carrier=wd)
    n = 40000
    lab = propagate(build_hamiltonian(ch, pulse), TimeGrid(20.0, n)).final
    rot = propagate(build_hamiltonian(ch, pulse, omega_frame=wd), TimeGrid(20.0, n)).final
    assert np.max(np.abs(np.abs(lab) ** 2 - np.abs(rot) ** 2)) < 1e-6


def test_spectated_block_structure():
    h = spectated_total_hamiltonian(0.3, 0.7)
    assert np.allclose(np.diag(h), [-0.15, 0.15, -0.15, 0.15])
    off = h - np.diag(np.diag(h))
    assert off[1, 2] == 0.7 and off[2, 1] == 0.7 and np.count_nonzero(off) == 2
