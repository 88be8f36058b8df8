"""Transmon application models and the figure-data recipes.

Each recipe returns ``{file name: text}`` with CSV or JSON content so the
CLI, the tests and external plotting scripts share one code path.
"""

from dataclasses import dataclass
import csv
import io
import json
from importlib import resources

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import minimize

from .devices import Node, TransmonChain, build_hamiltonian, computational_propagator, default_steps, \
    effective_splitting, fig2_chain, fig4_pair
from .erg import ErrorCurve, curve_to_pulse, erg_fidelity
from .gates import SWAP_BLOCK, standard_gate
from .operators import SX, TimeGrid, _batched_step_exponentials, destroy, embed, mhz, ordered_product, propagate, \
    rx, to_mhz, trace_fidelity
from .pulses import Pulse
from .refine import ScanResult, scan_amplitude, scan_delta
from .spectrum import absorption_doublet, absorption_surface, fit_linewidth, merge_threshold


def data_path(name):
    return resources.files("pulseforge") / "data" / name


def load_pulse(name):
    return Pulse.from_json(data_path(name))


def load_curve(name, duration=None):
    """Bundled curve, optionally stretched to a new gate time."""
    doc = json.loads(data_path(name).read_text())
    if duration is not None:
        doc["family_params"] = dict(doc["family_params"], duration=float(duration))
    return ErrorCurve.from_dict(doc)


def erg_curve_name(angle_label, order):
    return f"erg_{angle_label}_order{order}.json"


ANGLES = {"pi": np.pi, "pi2": np.pi / 2, "pi8": np.pi / 8}


# ---------------------------------------------------------------------------
# single transmon X gate


@dataclass(frozen=True)
class TransmonXModel:
    """One driven transmon with a quasi-static frequency offset ``delta``.

    The propagator is taken in the frame of the nominal drive at the
    unshifted frequency, so ``delta`` acts as the ``-(delta / 2) Z`` error of
    the qubit block; counter-rotating drive terms are kept unless ``rwa``.
    """

    omega: float
    alpha: float
    levels: int = 4
    rwa: bool = False
    per_radian: float = 0.1

    @classmethod
    def from_chain(cls, chain, node="t", **kw):
        n = chain.nodes[chain.index(node)]
        return cls(n.omega, n.alpha, n.levels, **kw)

    def propagator(self, pulse, delta=0.0):
        ch = TransmonChain((Node("t", self.omega + delta, self.alpha, self.levels),), (), target="t")
        p = pulse if pulse.carrier == self.omega else _with_carrier(pulse, self.omega)
        h = build_hamiltonian(ch, p, omega_frame=self.omega, rwa=self.rwa)
        n = default_steps(h, p.duration, per_radian=self.per_radian)
        return propagate(h, TimeGrid(p.duration, n)).final

    def family(self, delta):
        return lambda pulse: self.propagator(pulse, delta)


def _with_carrier(pulse, carrier):
    if pulse.form == "fourier":
        return Pulse.fourier(pulse.amplitudes, pulse.phases, pulse.duration, carrier)
    return Pulse.sampled(pulse.samples, pulse.duration, carrier)


def drag_correct(pulse, alpha, beta=0.5, kappa=0.0):
    """``(p + i beta p' / alpha) exp(i kappa int |p|^2 / alpha)`` on the sample grid.

    The quadrature term suppresses the ``1 -> 2`` transition and the phase
    ramp follows the drive-induced level shift.
    """
    p = pulse.to_sampled(1024) if pulse.form == "fourier" else pulse
    t = np.linspace(0.0, p.duration, p.samples.size)
    s = p.samples
    ramp = cumulative_trapezoid(np.abs(s) ** 2, t, initial=0.0) / alpha
    return Pulse.sampled((s + 1j * beta * np.gradient(s, t) / alpha) * np.exp(1j * kappa * ramp), p.duration,
                         p.carrier)


def calibrate_drag(pulse, model, target=SX, start=(0.5, 0.0)):
    """DRAG parameters maximising the ``delta = 0`` fidelity on ``model``.

    Calibration uses the rotating-wave variant of ``model`` (Nelder-Mead on
    two parameters); returns ``(corrected pulse, (beta, kappa))``.
    """
    fast = TransmonXModel(model.omega, model.alpha, model.levels, rwa=True, per_radian=model.per_radian)
    base = _with_carrier(pulse, model.omega)

    def loss(x):
        return 1.0 - trace_fidelity(fast.propagator(drag_correct(base, model.alpha, *x)), target, subspace=[0, 1])

    res = minimize(loss, np.asarray(start, dtype=float), method="Nelder-Mead",
                   options={"xatol": 1e-6, "fatol": 1e-11, "maxiter": 400})
    return drag_correct(base, model.alpha, *res.x), (float(res.x[0]), float(res.x[1]))


# ---------------------------------------------------------------------------
# exchange-coupled transmon pair


@dataclass(frozen=True)
class ExchangePairModel:
    """Two transmons held resonant in a common rotating frame.

    ``H = sum_j -(alpha_j / 2) n_j (n_j - 1) + delta n_t + g(t) (a^dag b + a b^dag)``
    with ``g(t)`` the real envelope of the pulse. States are ``|s t>``.
    """

    alpha_s: float
    alpha_t: float
    levels: int = 4
    n_steps: int = 4096

    @classmethod
    def from_chain(cls, chain, **kw):
        s, t = chain.nodes[chain.index(chain.intruder)], chain.nodes[chain.index(chain.target)]
        return cls(s.alpha, t.alpha, min(s.levels, t.levels), **kw)

    @property
    def computational(self):
        L = self.levels
        return (0, 1, L, L + 1)

    def _ops(self):
        dims = (self.levels, self.levels)
        a, b = embed(destroy(self.levels), 0, dims), embed(destroy(self.levels), 1, dims)
        na, nb = a.conj().T @ a, b.conj().T @ b
        h0 = -self.alpha_s / 2 * (na @ na - na) - self.alpha_t / 2 * (nb @ nb - nb)
        return h0, nb, a.conj().T @ b + a @ b.conj().T

    def propagator(self, g_pulse, delta=0.0, amplitude_scale=1.0):
        h0, nb, xx = self._ops()
        dt = g_pulse.duration / self.n_steps
        t = dt * (np.arange(self.n_steps) + 0.5)
        g = amplitude_scale * np.real(np.asarray(g_pulse(t)))
        hs = (h0 + delta * nb)[None] + g[:, None, None] * xx[None]
        return ordered_product(_batched_step_exponentials(hs, dt))

    def family(self, delta):
        return lambda pulse: self.propagator(pulse, delta)

    def iswap_target(self):
        return standard_gate("iSWAP").on(self.computational)

    def block_fidelity(self, u):
        L = self.levels
        return trace_fidelity(u, SWAP_BLOCK, subspace=[1, L])


def delta_range(g_mhz, levels=4):
    """Magnitude of the conditional shift of the reference pair at coupling ``g``."""
    return abs(effective_splitting(fig4_pair(g_mhz, levels)))


# ---------------------------------------------------------------------------
# serialisation helpers


def _num(x):
    return f"{float(x):.12g}"


def table_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_num(v) for v in r])
    return buf.getvalue()


def _json(doc):
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# recipes


def fig1b(gamma_mhz=1.0, delta_max_mhz=2.0, n_delta=81, half_span_mhz=4.0, n_detuning=401):
    """Absorption surface over (detuning, splitting) and the merged-doublet fit."""
    gamma = float(mhz(gamma_mhz))
    det = np.linspace(-mhz(half_span_mhz), mhz(half_span_mhz), n_detuning)
    deltas = np.linspace(0.0, mhz(delta_max_mhz), n_delta)
    surf = absorption_surface(det, deltas, gamma)
    rows = [[to_mhz(d), to_mhz(x), v] for d, row in zip(deltas, surf) for x, v in zip(det, row)]
    fit = fit_linewidth(absorption_doublet(float(mhz(0.5)), gamma))
    summary = {"gamma_MHz": gamma_mhz, "delta_fit_MHz": 0.5, "gamma_fit_MHz": float(_num(to_mhz(fit.gamma))),
               "eta": float(_num(fit.eta)), "merge_threshold_MHz": float(_num(to_mhz(merge_threshold(gamma))))}
    return {"fig1b_absorption.csv": table_csv(["delta_MHz", "detuning_MHz", "absorption"], rows),
            "fig1b_fit.json": _json(summary)}


def bloch_path(path, intruder):
    """Target Bloch vectors for ``|intruder, 0>`` evolved through a block path."""
    col = 2 * intruder
    c0, c1 = path[:, col, col], path[:, col + 1, col]
    norm = np.abs(c0) ** 2 + np.abs(c1) ** 2
    x = 2 * np.real(np.conj(c0) * c1) / norm
    y = 2 * np.imag(np.conj(c0) * c1) / norm
    z = (np.abs(c0) ** 2 - np.abs(c1) ** 2) / norm
    return np.column_stack([x, y, z])


def fig2_pulses(chain=None):
    """Published targeted-correction pulses and the cosine reference, on the drive carrier."""
    chain = chain or fig2_chain()
    wd = chain.drive_frequency()
    pi = _with_carrier(load_pulse("tcg_pi.json"), wd)
    pi8 = _with_carrier(load_pulse("tcg_pi8.json"), wd)
    return {"pi": (pi, np.pi), "pi8": (pi8, np.pi / 8),
            "cosine_pi": (Pulse.cosine(np.pi / 2, pi.duration, wd), np.pi)}


def fig2(per_radian=0.2, stride=8):
    """Subspace trajectories and fidelities on the three-level chain."""
    chain = fig2_chain()
    out, summary = {}, {}
    for name, (pulse, theta) in fig2_pulses(chain).items():
        u, path = computational_propagator(chain, pulse, keep_path=True, per_radian=per_radian)
        t = np.linspace(0.0, pulse.duration, len(path))
        summary[name] = {"T_ns": pulse.duration, "theta": theta,
                         "fidelity": float(_num(trace_fidelity(u, np.kron(np.eye(2), rx(theta)),
                                                              phase_blocks=[[0, 1], [2, 3]])))}
        for k in (0, 1):
            b = bloch_path(path, k)[::stride]
            out[f"fig2_{name}_subspace{k + 1}.csv"] = table_csv(["t_ns", "x", "y", "z"],
                                                                np.column_stack([t[::stride], b]))
    out["fig2_summary.json"] = _json(summary)
    return out


def fig3(duration=50.0, grid=np.linspace(-3.0, 3.0, 121), threshold=0.9999, n_steps=2048):
    """Fidelity against ``delta T`` for the bundled robust curves and cosine references."""
    out, summary = {}, {}
    cols, header = [grid], ["deltaT"]
    for label, angle in ANGLES.items():
        cos = Pulse.cosine(angle / 2, duration)
        fc = [erg_fidelity(cos, x / duration, angle, n_steps) for x in grid]
        s = ScanResult("deltaT", grid, np.clip(fc, 0, 1), threshold)
        summary[f"{label}_cosine"] = s.metadata()["plateau"]
        cols.append(s.fidelity)
        header.append(f"{label}_cosine")
        for order in (1, 2):
            pulse = curve_to_pulse(load_curve(erg_curve_name(label, order), duration)).to_pulse()
            f = [erg_fidelity(pulse, x / duration, angle, n_steps) for x in grid]
            s = ScanResult("deltaT", grid, np.clip(f, 0, 1), threshold)
            summary[f"{label}_order{order}"] = s.metadata()["plateau"]
            cols.append(s.fidelity)
            header.append(f"{label}_order{order}")
    out["fig3_fidelity.csv"] = table_csv(header, np.column_stack(cols))
    out["fig3_plateaus.json"] = _json({"duration_ns": duration, "threshold": threshold, "plateaus": summary})
    return out


FIG4_DURATION = 100.0


def fig4_x_setup(duration=FIG4_DURATION):
    pair = fig4_pair(0.0)
    model = TransmonXModel.from_chain(pair, "t")
    base = curve_to_pulse(load_curve(erg_curve_name("pi", 1), duration)).to_pulse()
    pulse, params = calibrate_drag(base, model)
    return model, pulse, params


def fig4_iswap_setup(duration=FIG4_DURATION):
    model = ExchangePairModel.from_chain(fig4_pair(0.0))
    pulse = curve_to_pulse(load_curve(erg_curve_name("pi", 1), duration)).to_pulse()
    return model, pulse


def fig4(duration=FIG4_DURATION, n_delta=41, n_scale=21, threshold=0.999):
    """X gate and iSWAP fidelity against ``delta`` plus the amplitude scans."""
    out = {}
    xm, xp, drag = fig4_x_setup(duration)
    x_target = standard_gate("X").on([0, 1])
    dx = delta_range(58.0)
    sx = scan_delta(xp, xm.family, x_target, np.linspace(-dx, dx, n_delta), threshold,
                    meta={"gate": "X", "duration_ns": duration, "drag_beta": drag[0], "drag_kappa": drag[1]})
    ax = scan_amplitude(xp, xm.family(0.0), x_target, np.linspace(0.98, 1.02, n_scale), threshold)
    im, ip = fig4_iswap_setup(duration)
    di = delta_range(100.0)
    grid = np.linspace(-di, di, n_delta)
    si = scan_delta(ip, im.family, im.iswap_target(), grid, threshold, meta={"gate": "iSWAP", "duration_ns": duration})
    block = [im.block_fidelity(im.propagator(ip, d)) for d in grid]
    ai = scan_amplitude(ip, im.family(0.0), im.iswap_target(), np.linspace(0.98, 1.02, n_scale), threshold)
    out["fig4b_delta.csv"] = sx.to_csv()
    out["fig4b_delta.json"] = sx.to_json() + "\n"
    out["fig4b_amplitude.csv"] = ax.to_csv()
    out["fig4c_delta.csv"] = table_csv(["delta", "fidelity", "swap_block_fidelity"],
                                       np.column_stack([grid, si.fidelity, block]))
    out["fig4c_delta.json"] = si.to_json() + "\n"
    out["fig4c_amplitude.csv"] = ai.to_csv()
    return out


RECIPES = {"fig1b": fig1b, "fig2": fig2, "fig3": fig3, "fig4": fig4}


def emit_figure_data(name, **kwargs):
    if name not in RECIPES:
        raise KeyError(f"unknown recipe {name!r}; choose from {sorted(RECIPES)}")
    return RECIPES[name](**kwargs)
