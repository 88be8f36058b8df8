import hashlib
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from pulseforge.cli import SchemaError, main, parse_grid


def _run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, out


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_parse_grid():
    assert np.allclose(parse_grid("-1:1:5"), [-1, -0.5, 0, 0.5, 1])
    assert parse_grid("0:1:0").size == 0
    for bad in ("1:2", "a:b:3", "2:1:5"):
        with pytest.raises(SchemaError):
            parse_grid(bad)


def test_spectrum_command(tmp_path):
    code, out = _run(tmp_path, "spectrum", "--gamma-MHz", "1", "--delta-MHz", "0.5")
    assert code == 0
    m = _manifest(out)
    assert m["results"]["gamma_fit_MHz"] == pytest.approx(1.3426, abs=1e-3)
    assert m["schema_version"] == 1 and m["seed"] == 0


def test_manifest_lists_every_output_with_hash(tmp_path):
    code, out = _run(tmp_path, "figure", "fig1b")
    assert code == 0
    m = _manifest(out)
    written = sorted(p for p in os.listdir(out) if p != "manifest.json")
    assert sorted(m["outputs"]) == written
    for name, digest in m["outputs"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest


def test_identical_runs_give_identical_csv(tmp_path):
    _run(tmp_path, "curve-to-pulse", "--curve", "erg_pi_order1.json", name="c")
    argv = ["scan", "--pulse", str(tmp_path / "c" / "pulse.json"), "--axis", "delta", "--grid=-1:1:9", "--seed", "7"]
    _, a = _run(tmp_path, *argv, name="a")
    _, b = _run(tmp_path, *argv, name="b")
    assert (a / "scan.csv").read_bytes() == (b / "scan.csv").read_bytes()
    assert _manifest(a)["outputs"]["scan.csv"] == _manifest(b)["outputs"]["scan.csv"]


def test_exit_code_for_split_regime(tmp_path, capsys):
    code, _ = _run(tmp_path, "spectrum", "--gamma-MHz", "1", "--delta-MHz", "3")
    assert code == 3
    err = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert err["error"] == "RegimeError" and err["exit_code"] == 3


@pytest.mark.parametrize("argv", [
    ["simulate", "--pulse", "missing.json"],
    ["scan", "--pulse", "tcg_pi.json", "--grid", "0:1:0", "--axis", "amplitude"],
    ["spectrum", "--gamma-MHz", "0"],
    ["simulate", "--pulse", "tcg_pi.json", "--gate", "Toffoli"],
    ["figure", "fig9"],
    ["no-such-command"],
])
def test_schema_errors_exit_2(tmp_path, argv):
    assert _run(tmp_path, *argv)[0] == 2


def test_bad_json_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert _run(tmp_path, "simulate", "--pulse", str(bad))[0] == 2


def test_curve_to_pulse_command(tmp_path):
    code, out = _run(tmp_path, "curve-to-pulse", "--curve", "erg_pi2_order2.json")
    assert code == 0
    res = _manifest(out)["results"]
    assert res["rotation_angle"] == pytest.approx(np.pi / 2, abs=1e-9)
    pulse = json.loads((out / "pulse.json").read_text())
    assert pulse["form"] == "sampled"


def test_simulate_two_level(tmp_path):
    code, out = _run(tmp_path, "simulate", "--pulse", "erg_pi_order1.json", "--gate", "X")
    assert code == 2  # a curve document is not a pulse
    _run(tmp_path, "curve-to-pulse", "--curve", "erg_pi_order1.json", name="c")
    code, out = _run(tmp_path, "simulate", "--pulse", str(tmp_path / "c" / "pulse.json"), "--gate", "X",
                     "--delta-MHz", "0")
    assert code == 0
    assert _manifest(out)["results"]["fidelity"] == pytest.approx(1.0, abs=1e-9)


def test_synthesize_on_pair_document(tmp_path):
    dev = tmp_path / "pair.json"
    dev.write_text(json.dumps({
        "schema_version": 1,
        "nodes": [{"name": "i", "kind": "qubit", "frequency_GHz": 5.3, "levels": 2},
                  {"name": "t", "kind": "qubit", "frequency_GHz": 5.0, "levels": 2}],
        "couplings": [{"nodes": ["i", "t"], "g_MHz": 20.0, "form": "exchange"}],
        "target": "t", "intruder": "i"}))
    code, out = _run(tmp_path, "synthesize-tcg", "--device", str(dev), "--theta", "pi/2", "--harmonics", "5",
                     "--duration", "80", "--starts", "2")
    assert code == 0, (out / "manifest.json").exists()
    res = _manifest(out)["results"]
    assert max(abs(r) for r in res["residuals"]) < 1e-6
    assert _manifest(out)["inputs"]["pair.json"] == hashlib.sha256(dev.read_bytes()).hexdigest()


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "pulseforge.cli", "spectrum", "--out", str(tmp_path / "s")],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert (tmp_path / "s" / "spectrum.csv").is_file()
