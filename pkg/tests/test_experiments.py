import csv
import io
import json

import numpy as np
import pytest

from pulseforge.devices import fig4_pair
from pulseforge.experiments import (ANGLES, ExchangePairModel, TransmonXModel, data_path, delta_range, drag_correct,
                                    emit_figure_data, erg_curve_name, fig4_x_setup, load_curve, load_pulse,
                                    table_csv)
from pulseforge.gates import standard_gate
from pulseforge.operators import mhz
from pulseforge.pulses import Pulse


def test_bundled_data_present():
    for name in ["fig2_chain.json", "fig4_pair.json", "tcg_pi.json", "tcg_pi8.json"]:
        assert data_path(name).is_file()
    for label in ANGLES:
        for order in (1, 2):
            assert data_path(erg_curve_name(label, order)).is_file()


def test_published_pulses_units():
    p = load_pulse("tcg_pi.json")
    assert p.duration == pytest.approx(98.6)
    assert p.amplitudes[0] == pytest.approx(19.6e-3)
    assert p.phases[0] == 0.0 and p.amplitudes.size == 10
    assert load_pulse("tcg_pi8.json").duration == pytest.approx(35.0)


def test_curve_stretch_keeps_shape():
    a, b = load_curve(erg_curve_name("pi", 1)), load_curve(erg_curve_name("pi", 1), 100.0)
    assert b.duration == pytest.approx(2 * a.duration)
    assert np.allclose(b.r[::1], 2 * a.r, atol=1e-9)


def test_table_csv_precision():
    text = table_csv(["a", "b"], [[1 / 3, 2.0]])
    assert text == "a,b\n0.333333333333,2\n"


def test_fig1b_recipe():
    out = emit_figure_data("fig1b", n_delta=5, n_detuning=41)
    rows = list(csv.DictReader(io.StringIO(out["fig1b_absorption.csv"])))
    assert len(rows) == 5 * 41
    fit = json.loads(out["fig1b_fit.json"])
    assert fit["gamma_fit_MHz"] == pytest.approx(1.3426, abs=1e-3)
    assert fit["merge_threshold_MHz"] == pytest.approx(1 / np.sqrt(3), rel=1e-9)


def test_fig3_recipe_deterministic():
    a = emit_figure_data("fig3", grid=np.linspace(-3, 3, 13), n_steps=512)
    b = emit_figure_data("fig3", grid=np.linspace(-3, 3, 13), n_steps=512)
    assert a == b
    header = a["fig3_fidelity.csv"].splitlines()[0].split(",")
    assert header[0] == "deltaT" and len(header) == 1 + 3 * len(ANGLES)
    plateaus = json.loads(a["fig3_plateaus.json"])["plateaus"]
    assert plateaus["pi_order2"]["width"] > plateaus["pi_order1"]["width"] > plateaus["pi_cosine"]["width"]


def test_unknown_recipe():
    with pytest.raises(KeyError):
        emit_figure_data("fig5")


def test_delta_ranges():
    # the conditional shift of the reference pair grows with the coupling
    assert delta_range(58.0) == pytest.approx(mhz(16.77), rel=2e-3)
    assert delta_range(100.0) == pytest.approx(mhz(41.9), rel=2e-3)
    assert delta_range(100.0) > delta_range(58.0)


def test_drag_limits():
    p = Pulse.cosine(np.pi / 2, 40.0)
    q = drag_correct(p, mhz(-260.0), beta=0.0, kappa=0.0)
    t = np.linspace(0, 40.0, q.samples.size)
    assert np.allclose(q.samples, p(t), atol=1e-12)
    r = drag_correct(p, mhz(-260.0), beta=1.0)
    assert np.allclose(r.samples.real, p(t), atol=1e-12) and np.max(np.abs(r.samples.imag)) > 0


def test_transmon_x_frame():
    m = TransmonXModel.from_chain(fig4_pair(0.0), "t", rwa=True)
    p = Pulse.cosine(np.pi / 2, 100.0, m.omega)
    u = m.propagator(p)
    assert u.shape == (4, 4)
    assert np.allclose(u.conj().T @ u, np.eye(4), atol=1e-10)
    assert standard_gate("X").on([0, 1]).fidelity(u) > 0.99


@pytest.mark.slow
def test_drag_calibration_improves_x_gate():
    model, pulse, (beta, kappa) = fig4_x_setup()
    target = standard_gate("X").on([0, 1])
    assert target.fidelity(model.propagator(pulse)) > 0.9999
    assert 0.3 < beta < 0.7


def test_exchange_pair_structure():
    m = ExchangePairModel.from_chain(fig4_pair(0.0), n_steps=256)
    assert m.computational == (0, 1, 4, 5)
    u = m.propagator(Pulse.cosine(0.0, 10.0))
    assert np.allclose(np.abs(np.diag(u)), 1.0)
