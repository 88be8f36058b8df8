"""Command-line entry point.

Every command writes its artifacts plus ``manifest.json`` (input and output
content hashes, library versions, seed, wall time) into ``--out``. Exit
status is 0 on success, 2 for invalid input and 3 for numerical failures;
failures print a JSON error document on stdout.
"""

import argparse
import hashlib
import json
import os
import platform
import sys
import time
from importlib import metadata

import numpy as np

from . import _validation as v
from .devices import BipartitePair, TransmonChain, computational_propagator, effective_splitting, load_device
from .erg import ErrorCurve, curve_to_pulse, order1_residual, order2_residual, propagate_erg, \
    rotation_angle
from .experiments import RECIPES, ExchangePairModel, TransmonXModel, _with_carrier, calibrate_drag, data_path
from .gates import _parse_angle, standard_gate
from .operators import mhz, to_mhz, trace_fidelity
from .pulses import Pulse
from .refine import ModelError, ScanResult, scan_amplitude, scan_delta
from .spectrum import absorption_doublet, fit_linewidth
from .tcg import TcgConstraints, chain_fidelity, constraint_residuals, effective_fidelity, pair_as_chain, solve_tcg

DEFAULT_SEED = 0
SCHEMA_VERSION = 1


class SchemaError(ValueError):
    """Invalid command-line input or input document."""


NUMERICAL = (v.SynthesisError, v.RegimeError, v.PropagationError, v.DegeneracyError, ModelError)


# ---------------------------------------------------------------------------
# helpers


def _resolve(path, what):
    if path is None:
        raise SchemaError(f"--{what} is required")
    if os.path.exists(path):
        return path
    bundled = data_path(os.path.basename(path))
    if bundled.is_file():
        return str(bundled)
    raise SchemaError(f"{what} file not found: {path}")


def _load_json(path, what):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{what} file is not valid JSON: {exc}") from exc


def parse_grid(text):
    """``lo:hi:n`` into an array; ``n = 0`` gives an empty grid."""
    parts = text.split(":")
    if len(parts) != 3:
        raise SchemaError("grid must be lo:hi:n")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise SchemaError(f"bad grid {text!r}") from exc
    if n < 0 or (n > 0 and not hi > lo and n > 1):
        raise SchemaError("grid needs hi > lo and n >= 0")
    return np.linspace(lo, hi, n)


def _angle(text):
    try:
        return _parse_angle(text)
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def _versions():
    out = {"python": platform.python_version()}
    for pkg in ("pulseforge", "numpy", "scipy", "scikit-learn"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _num(x):
    return None if x is None or not np.isfinite(x) else float(f"{float(x):.12g}")


class Run:
    """Collects inputs and outputs of one command and writes the manifest."""

    def __init__(self, args):
        self.args = args
        self.out = args.out
        self.inputs = {}
        self.outputs = []
        self.results = {}
        self.t0 = time.perf_counter()
        os.makedirs(self.out, exist_ok=True)

    def input(self, path):
        self.inputs[os.path.basename(path)] = _sha256(path)
        return path

    def write(self, name, text):
        path = os.path.join(self.out, name)
        with open(path, "w", newline="\n") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
        self.outputs.append(name)

    def finish(self):
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "command": self.args.command,
            "arguments": {k: val for k, val in sorted(vars(self.args).items()) if k not in ("func", "out")},
            "seed": self.args.seed,
            "inputs": self.inputs,
            "outputs": {n: _sha256(os.path.join(self.out, n)) for n in self.outputs},
            "results": self.results,
            "versions": _versions(),
            "wall_time_s": round(time.perf_counter() - self.t0, 3),
        }
        with open(os.path.join(self.out, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return 0


def _device(run, path):
    try:
        return load_device(run.input(_resolve(path, "device")))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"device document is missing a field: {exc}") from exc


def _pulse(run, path):
    try:
        return Pulse.from_dict(_load_json(run.input(_resolve(path, "pulse")), "pulse"))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"pulse document is missing a field: {exc}") from exc


def _curve(run, path):
    try:
        return ErrorCurve.from_dict(_load_json(run.input(_resolve(path, "curve")), "curve"))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"curve document is missing a field: {exc}") from exc


# ---------------------------------------------------------------------------
# commands


def cmd_synthesize_tcg(args):
    run = Run(args)
    dev = _device(run, args.device)
    theta = _angle(args.theta)
    chain = pair_as_chain(dev) if isinstance(dev, BipartitePair) else dev
    c = TcgConstraints.from_chain(chain, theta)
    pulse = solve_tcg(c, args.harmonics, args.duration, args.seed, args.starts, carrier=chain.drive_frequency())
    run.write("pulse.json", pulse.to_json())
    run.results.update({
        "theta": _num(theta),
        "residuals": [_num(r) for r in constraint_residuals(pulse, c)],
        "model_fidelity": _num(effective_fidelity(pulse, c)),
    })
    if args.verify:
        run.results["chain_fidelity"] = _num(chain_fidelity(pulse, chain, theta, per_radian=0.2))
    return run.finish()


def cmd_curve_to_pulse(args):
    run = Run(args)
    curve = _curve(run, args.curve)
    pulse = curve_to_pulse(curve).to_pulse(n_samples=args.samples)
    run.write("pulse.json", pulse.to_json())
    res = {"duration_ns": _num(curve.duration),
           "order1_residual": [_num(x) for x in np.atleast_1d(order1_residual(curve))],
           "order2_residual": [_num(x) for x in np.atleast_1d(order2_residual(curve))]}
    if curve.dimension == 2:
        ang = rotation_angle(curve)
        res.update({"rotation_angle": _num(ang.phi), "branch": ang.branch, "fidelity": _num(ang.fidelity)})
    run.results.update(res)
    return run.finish()


def _gate(args):
    try:
        return standard_gate(args.gate)
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def cmd_simulate(args):
    run = Run(args)
    pulse = _pulse(run, args.pulse)
    gate = _gate(args)
    if args.device is None:
        if gate.dim != 2:
            raise SchemaError("simulate without --device takes a single-qubit gate")
        u = propagate_erg(pulse, float(mhz(args.delta_MHz)))
        run.results["fidelity"] = _num(gate.fidelity(u))
        return run.finish()
    dev = _device(run, args.device)
    chain = pair_as_chain(dev) if isinstance(dev, BipartitePair) else dev
    if gate.dim != 2:
        raise SchemaError("simulate on a device takes a single-qubit gate")
    if not pulse.carrier:
        pulse = _with_carrier(pulse, chain.drive_frequency())
    u = computational_propagator(chain, pulse, rwa=args.rwa, per_radian=0.2)
    f = trace_fidelity(u, np.kron(np.eye(2), gate.matrix), phase_blocks=[[0, 1], [2, 3]])
    run.results["fidelity"] = _num(f)
    run.results["leakage"] = _num(1.0 - np.mean(np.sum(np.abs(u) ** 2, axis=0)))
    return run.finish()


def _scan_setup(args, run, pulse, gate):
    """Model family on rad/ns and the default half-width of the delta grid in MHz."""
    if args.device is None:
        if gate.dim != 2:
            raise SchemaError("a scan without --device needs a single-qubit gate")
        half = to_mhz(3.0 / pulse.duration)

        def family(d):
            return lambda p: propagate_erg(p, d)

        return family, (lambda p: propagate_erg(p, 0.0)), gate, pulse, half, {}
    dev = _device(run, args.device)
    if not isinstance(dev, TransmonChain) or dev.target is None or dev.intruder is None:
        raise SchemaError("scan --device needs a chain document with target and intruder")
    half = abs(to_mhz(effective_splitting(dev)))
    if gate.dim == 4:
        model = ExchangePairModel.from_chain(dev)
        return model.family, model.family(0.0), model.iswap_target(), pulse, half, {"model": "exchange_pair"}
    model = TransmonXModel.from_chain(dev, dev.target)
    meta = {"model": "transmon_x"}
    if args.drag:
        pulse, (beta, kappa) = calibrate_drag(pulse, model, gate.matrix)
        meta.update({"drag_beta": _num(beta), "drag_kappa": _num(kappa)})
    return model.family, model.family(0.0), gate.on([0, 1]), pulse, half, meta


def cmd_scan(args):
    run = Run(args)
    pulse = _pulse(run, args.pulse)
    gate = _gate(args)
    family, nominal, target, pulse, half, meta = _scan_setup(args, run, pulse, gate)
    meta.update({"gate": gate.name, "seed": args.seed})
    if args.axis == "delta":
        grid = parse_grid(args.grid) if args.grid else np.linspace(-half, half, 41)
        if grid.size == 0:
            raise SchemaError("axis grid empty")
        s = scan_delta(pulse, family, target, mhz(grid), args.threshold, meta=meta)
        s = ScanResult("delta_MHz", grid, s.fidelity, args.threshold, s.meta)
    else:
        grid = parse_grid(args.grid) if args.grid else np.linspace(0.98, 1.02, 21)
        if grid.size == 0:
            raise SchemaError("axis grid empty")
        s = scan_amplitude(pulse, nominal, target, grid, args.threshold, meta=meta)
    run.write("scan.csv", s.to_csv())
    run.write("scan.json", s.to_json())
    run.results["plateau"] = s.metadata()["plateau"]
    return run.finish()


def cmd_spectrum(args):
    run = Run(args)
    if not args.gamma_MHz > 0:
        raise SchemaError("gamma must be positive")
    gamma, delta = float(mhz(args.gamma_MHz)), float(mhz(args.delta_MHz))
    prof = absorption_doublet(delta, gamma)
    rows = ["detuning_MHz,absorption"] + [f"{to_mhz(x):.12g},{y:.12g}" for x, y in zip(prof.axis, prof.values)]
    run.write("spectrum.csv", "\n".join(rows))
    fit = fit_linewidth(prof)
    if not fit.converged:
        raise v.RegimeError("linewidth fit did not converge")
    run.results.update({"gamma_fit_MHz": _num(to_mhz(fit.gamma)), "eta": _num(fit.eta),
                        "center_MHz": _num(to_mhz(fit.center)), "rms": _num(fit.rms)})
    return run.finish()


def cmd_figure(args):
    if args.name not in RECIPES:
        raise SchemaError(f"unknown recipe {args.name!r}; choose from {sorted(RECIPES)}")
    run = Run(args)
    for name, text in RECIPES[args.name]().items():
        run.write(name, text)
    return run.finish()


# ---------------------------------------------------------------------------
# parser


def build_parser():
    p = argparse.ArgumentParser(prog="pulseforge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", default="pulseforge_out", help="output directory")
        sp.add_argument("--seed", type=int, default=DEFAULT_SEED)

    s = sub.add_parser("synthesize-tcg", help="solve the targeted-correction constraints")
    common(s)
    s.add_argument("--device", required=True)
    s.add_argument("--theta", default="pi")
    s.add_argument("--harmonics", type=int, default=10)
    s.add_argument("--duration", type=float, default=100.0, help="gate time in ns")
    s.add_argument("--starts", type=int, default=8)
    s.add_argument("--verify", action="store_true", help="also propagate the full chain")
    s.set_defaults(func=cmd_synthesize_tcg)

    s = sub.add_parser("curve-to-pulse", help="drive pulse from an error curve")
    common(s)
    s.add_argument("--curve", required=True)
    s.add_argument("--samples", type=int, default=None)
    s.set_defaults(func=cmd_curve_to_pulse)

    s = sub.add_parser("simulate", help="gate fidelity of a pulse")
    common(s)
    s.add_argument("--pulse", required=True)
    s.add_argument("--device", default=None)
    s.add_argument("--gate", default="X")
    s.add_argument("--delta-MHz", type=float, default=0.0, help="static error for the two-level model")
    s.add_argument("--rwa", action="store_true")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("scan", help="fidelity against a static error or amplitude scale")
    common(s)
    s.add_argument("--pulse", required=True)
    s.add_argument("--device", default=None)
    s.add_argument("--gate", default="X")
    s.add_argument("--axis", choices=("delta", "amplitude"), default="delta")
    s.add_argument("--grid", default=None, help="lo:hi:n (delta in MHz x 2pi); use --grid=-a:b:n for negative lo")
    s.add_argument("--threshold", type=float, default=0.999)
    s.add_argument("--no-drag", dest="drag", action="store_false", help="skip the DRAG calibration on transmons")
    s.set_defaults(func=cmd_scan)

    s = sub.add_parser("spectrum", help="absorption doublet and its single-line fit")
    common(s)
    s.add_argument("--gamma-MHz", type=float, default=1.0)
    s.add_argument("--delta-MHz", type=float, default=0.5)
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("figure", help="regenerate the data behind one figure")
    common(s)
    s.add_argument("name")
    s.set_defaults(func=cmd_figure)
    return p


def _fail(code, exc):
    print(json.dumps({"status": "error", "exit_code": code, "error": type(exc).__name__, "message": str(exc)}))
    return code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    try:
        return args.func(args)
    except NUMERICAL as exc:
        return _fail(3, exc)
    except (SchemaError, ValueError, KeyError, TypeError, OSError) as exc:
        return _fail(2, exc)


if __name__ == "__main__":
    sys.exit(main())
