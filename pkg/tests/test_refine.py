import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from sklearn.base import clone

from pulseforge.erg import propagate_erg
from pulseforge.gates import GateTarget, standard_gate
from pulseforge.operators import I2, mhz, rx
from pulseforge.pulses import Pulse
from pulseforge.refine import (ModelError, PulseRefiner, RefineConfig, ScanResult, extract_plateau, fd_gradient,
                               model_hash, refine, scan_amplitude, scan_delta)
from pulseforge.tcg import ReducedDriveModel, TcgConstraints, solve_tcg

SIMPLE = TcgConstraints(np.pi, mhz(20.0), 1.0, 0.97)
BLOCK_TARGET = GateTarget(np.kron(I2, rx(np.pi)), phase_blocks=((0, 1), (2, 3)))


def _two_level_model(pulse):
    return ReducedDriveModel.two_level(SIMPLE).propagator(pulse, 256)


@pytest.fixture(scope="module")
def near_optimal():
    return solve_tcg(SIMPLE, n_harmonics=6, duration=100.0, seed=0, n_starts=2)


def _perturbed(pulse, seed, scale=0.4):
    rng = np.random.default_rng(seed)
    return Pulse.fourier(pulse.amplitudes * (1 + scale * rng.normal(size=pulse.amplitudes.size)),
                         np.r_[0.0, pulse.phases[1:] + scale * rng.normal(size=pulse.phases.size - 1)],
                         pulse.duration)


@pytest.mark.parametrize("seed", [1, 2])
def test_refine_recovers_perturbed_pulse(near_optimal, seed):
    start = _perturbed(near_optimal, seed)
    res = refine(start, _two_level_model, BLOCK_TARGET, RefineConfig(max_iter=60))
    assert res.initial_fidelity < 0.99
    assert res.fidelity >= 0.99
    assert np.all(np.diff(res.history) > 0)
    assert BLOCK_TARGET.fidelity(_two_level_model(res.pulse)) == pytest.approx(res.fidelity, abs=1e-12)


@pytest.mark.parametrize("free", ["amplitudes", "phases"])
def test_refine_partial_parameter_sets(near_optimal, free):
    start = _perturbed(near_optimal, 4, 0.05)
    res = refine(start, _two_level_model, BLOCK_TARGET, RefineConfig(free=free, max_iter=10))
    assert res.fidelity >= res.initial_fidelity
    if free == "amplitudes":
        assert np.array_equal(res.pulse.phases, start.phases)
    else:
        assert np.array_equal(res.pulse.amplitudes, start.amplitudes)


def test_refine_sampled_pulse():
    T = 30.0
    start = Pulse.sampled(0.9 * np.pi / (2 * T) * np.ones(16), T)
    res = refine(start, lambda p: propagate_erg(p, 0.0, 512), standard_gate("X"), RefineConfig(max_iter=20))
    assert res.fidelity > 0.9999 > res.initial_fidelity


def test_refine_is_deterministic(near_optimal):
    start = _perturbed(near_optimal, 5)
    a = refine(start, _two_level_model, BLOCK_TARGET, RefineConfig(max_iter=5))
    b = refine(start, _two_level_model, BLOCK_TARGET, RefineConfig(max_iter=5))
    assert a.pulse.amplitudes.tobytes() == b.pulse.amplitudes.tobytes()


def test_non_finite_model_raises(near_optimal):
    with pytest.raises(ModelError):
        refine(near_optimal, lambda p: np.full((4, 4), np.nan), BLOCK_TARGET)


@pytest.mark.parametrize("kw", [{"max_iter": 0}, {"tol": 0.0}, {"free": "carrier"}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        RefineConfig(**kw)


@given(st.integers(0, 2**31 - 1))
def test_fd_gradient_step_stable(seed):
    rng = np.random.default_rng(seed)
    a, x = rng.normal(size=3), rng.normal(size=3)

    def f(v):
        return np.sin(a @ v) + 0.5 * np.sum(v**2)

    g1, g2 = fd_gradient(f, x, 1e-5), fd_gradient(f, x, 1e-6)
    exact = np.cos(a @ x) * a + x
    assert np.allclose(g1, exact, rtol=1e-3, atol=1e-7)
    assert np.linalg.norm(g1 - g2) <= 1e-3 * max(np.linalg.norm(g1), 1e-12) + 1e-7


def test_estimator(near_optimal):
    est = PulseRefiner(model=_two_level_model, target=BLOCK_TARGET, max_iter=5)
    assert clone(est).get_params()["max_iter"] == 5
    est.fit(_perturbed(near_optimal, 7, 0.05))
    assert est.result_.fidelity >= est.result_.initial_fidelity
    assert est.score(est.pulse_) == pytest.approx(est.result_.fidelity)


# ---------------------------------------------------------------------------
# plateaus and scans


def test_plateau_picks_longest_run():
    axis = np.arange(10.0)
    f = np.array([1, 1, 0, 1, 1, 1, 0, 1, 1, 1])
    p = extract_plateau(axis, f, 0.5)
    assert (p.lo, p.hi) == (3.0, 5.0)
    assert p.width == 2.0 and p.center == 4.0


def test_empty_plateau():
    p = extract_plateau(np.arange(3.0), [0.1, 0.2, 0.3], 0.9)
    assert p.width == 0.0 and np.isnan(p.center)


@given(st.floats(-2.0, 2.0), st.floats(0.2, 3.0), st.integers(11, 41), st.integers(2, 5))
def test_nested_grid_never_shrinks_plateau(c, w, n, k):
    def f(x):
        return np.exp(-((x - c) / w) ** 4)

    coarse = np.linspace(-5, 5, n)
    fine = np.linspace(-5, 5, k * (n - 1) + 1)
    pc = extract_plateau(coarse, f(coarse), 0.9)
    pf = extract_plateau(fine, f(fine), 0.9)
    assert pf.width >= pc.width - (coarse[1] - coarse[0]) - 1e-12


def _erg_family(delta):
    return lambda p: propagate_erg(p, delta, 256)


def test_scan_independent_of_order_and_workers():
    pulse = Pulse.cosine(np.pi / 2, 40.0)
    grid = np.linspace(-0.1, 0.1, 21)
    a = scan_delta(pulse, _erg_family, standard_gate("X"), grid, workers=1)
    b = scan_delta(pulse, _erg_family, standard_gate("X"), grid, workers=4)
    rev = scan_delta(pulse, _erg_family, standard_gate("X"), grid[::-1].copy()[::-1], workers=1)
    assert a.fidelity.tobytes() == b.fidelity.tobytes() == rev.fidelity.tobytes()
    assert a.to_csv() == b.to_csv()


def test_scan_thread_count_from_environment(monkeypatch):
    monkeypatch.setenv("PULSEFORGE_THREADS", "3")
    pulse = Pulse.cosine(np.pi / 2, 40.0)
    s = scan_delta(pulse, _erg_family, standard_gate("X"), np.linspace(-0.05, 0.05, 7))
    assert s.fidelity.size == 7


def test_amplitude_scan_peaks_at_unity():
    pulse = Pulse.cosine(np.pi / 2, 40.0)
    s = scan_amplitude(pulse, _erg_family(0.0), standard_gate("X"), np.linspace(0.9, 1.1, 21))
    assert s.axis[np.argmax(s.fidelity)] == pytest.approx(1.0)
    assert s.fidelity.max() == pytest.approx(1.0, abs=1e-12)


def test_empty_grid_rejected():
    with pytest.raises(ValueError, match="empty"):
        scan_delta(Pulse.cosine(1.0, 10.0), _erg_family, standard_gate("X"), [])


def test_scan_result_validation():
    with pytest.raises(ValueError):
        ScanResult("d", [0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        ScanResult("d", [0.0, 1.0], [1.0, 1.5])


def test_scan_serialisation(tmp_path):
    s = ScanResult("delta", [0.0, 1 / 3], [1.0, 0.123456789012345], 0.5, {"model_hash": model_hash("m")})
    text = s.to_csv(tmp_path / "s.csv")
    assert text.splitlines() == ["delta,fidelity", "0,1", "0.333333333333,0.123456789012"]
    meta = json.loads(s.to_json(tmp_path / "s.json"))
    assert meta["schema_version"] == 1 and meta["plateau"]["width"] == 0.0
    assert meta["model_hash"] == model_hash("m") and len(meta["model_hash"]) == 16
    assert s.with_threshold(0.1).plateau.width == pytest.approx(1 / 3)
