"""Finite-difference pulse refinement and robustness scans."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import csv
import hashlib
import io
import json
import os

import numpy as np
from sklearn.base import BaseEstimator

from .pulses import Pulse

SCHEMA_VERSION = 1


class ModelError(RuntimeError):
    """The model returned a non-finite fidelity."""


@dataclass(frozen=True)
class RefineConfig:
    """Which pulse parameters are free and how the ascent proceeds.

    ``free`` selects ``"amplitudes"``, ``"phases"`` or ``"both"`` for Fourier
    pulses (``phi_0`` is never free); sampled pulses always refine their
    real samples. The ascent itself is deterministic; ``seed`` is recorded
    with the run so refinements launched from randomised starting pulses
    can be reproduced.
    """

    free: str = "both"
    free_duration: bool = False
    max_iter: int = 200
    tol: float = 1e-10
    fd_step: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.free not in ("amplitudes", "phases", "both"):
            raise ValueError(f"unknown free-parameter set {self.free!r}")


def _pack(pulse, cfg):
    if pulse.form == "fourier":
        parts = []
        if cfg.free in ("amplitudes", "both"):
            parts.append(pulse.amplitudes)
        if cfg.free in ("phases", "both"):
            parts.append(pulse.phases[1:])
    else:
        if not pulse.is_real:
            raise ValueError("refinement of complex sampled pulses is not supported")
        parts = [pulse.samples.real]
    if cfg.free_duration:
        parts.append([pulse.duration])
    return np.concatenate([np.asarray(p, dtype=float) for p in parts])


def _unpack(x, pulse, cfg):
    i = 0
    if pulse.form == "fourier":
        amps, phases = pulse.amplitudes, pulse.phases
        n = amps.size
        if cfg.free in ("amplitudes", "both"):
            amps, i = x[i:i + n], i + n
        if cfg.free in ("phases", "both"):
            phases, i = np.r_[0.0, x[i:i + n - 1]], i + n - 1
        out = replace(pulse, amplitudes=np.array(amps), phases=np.array(phases))
    else:
        n = pulse.samples.size
        out = Pulse.sampled(x[:n], pulse.duration, pulse.carrier)
        i = n
    if cfg.free_duration:
        out = replace(out, duration=float(x[i])) if out.form == "fourier" else Pulse.sampled(out.samples, float(x[i]), out.carrier)
    return out


def make_objective(model, target):
    """``pulse -> fidelity`` from a propagator callable and a :class:`GateTarget`."""

    def fidelity(pulse):
        f = target.fidelity(model(pulse))
        if not np.isfinite(f):
            raise ModelError("model produced a non-finite fidelity")
        return f

    return fidelity


@dataclass
class RefineResult:
    pulse: Pulse
    fidelity: float
    initial_fidelity: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def fd_gradient(f, x, step=1e-6):
    """Central differences with a relative step."""
    g = np.zeros_like(x)
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def refine(pulse, model, target, cfg=None):
    """Raise the fidelity of ``pulse`` by monotone quasi-Newton ascent.

    Parameters
    ----------
    pulse : Pulse
        Starting point; should already be a reasonable gate.
    model : callable
        ``pulse -> propagator`` (for instance a closure over a device).
    target : GateTarget
    cfg : RefineConfig, optional

    Returns
    -------
    RefineResult
        ``fidelity >= initial_fidelity`` always holds; each accepted step
        strictly increases the fidelity.
    """
    cfg = cfg or RefineConfig()
    fid = make_objective(model, target)

    def f(x):
        return fid(_unpack(x, pulse, cfg))

    x = _pack(pulse, cfg)
    fx = f(x)
    f0 = fx
    h_inv = np.eye(x.size)
    g = fd_gradient(f, x, cfg.fd_step)
    scale = max(1.0, np.max(np.abs(x)))
    history = [fx]
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        if np.linalg.norm(g) * scale < cfg.tol:
            converged = True
            break
        direction = h_inv @ g
        if direction @ g <= 0:
            h_inv = np.eye(x.size)
            direction = g
        # cap the first trial step to a modest relative change
        step = min(1.0, 0.1 * scale / max(np.max(np.abs(direction)), 1e-300))
        accepted = False
        for _ in range(40):
            x_new = x + step * direction
            f_new = f(x_new)
            if f_new > fx + 1e-4 * step * (direction @ g) or (f_new > fx and step < 1e-8):
                accepted = True
                break
            step *= 0.5
        if not accepted or f_new - fx < cfg.tol:
            if accepted and f_new > fx:
                x, fx = x_new, f_new
                history.append(fx)
            converged = True
            break
        g_new = fd_gradient(f, x_new, cfg.fd_step)
        s, yv = x_new - x, -(g_new - g)
        sy = s @ yv
        if sy > 1e-16:
            rho = 1.0 / sy
            v = np.eye(x.size) - rho * np.outer(s, yv)
            h_inv = v @ h_inv @ v.T + rho * np.outer(s, s)
        x, fx, g = x_new, f_new, g_new
        history.append(fx)
    out = _unpack(x, pulse, cfg) if fx > f0 else pulse
    return RefineResult(out, max(fx, f0), f0, it, converged, history)


class PulseRefiner(BaseEstimator):
    """Estimator form of :func:`refine`; ``fit(pulse)`` stores ``result_``."""

    def __init__(self, model=None, target=None, free="both", max_iter=200, tol=1e-10, fd_step=1e-6, seed=0):
        self.model = model
        self.target = target
        self.free = free
        self.max_iter = max_iter
        self.tol = tol
        self.fd_step = fd_step
        self.seed = seed

    def fit(self, X, y=None):
        cfg = RefineConfig(self.free, False, self.max_iter, self.tol, self.fd_step, self.seed)
        self.result_ = refine(X, self.model, self.target, cfg)
        self.pulse_ = self.result_.pulse
        return self

    def transform(self, X):
        return refine(X, self.model, self.target,
                      RefineConfig(self.free, False, self.max_iter, self.tol, self.fd_step, self.seed)).pulse

    def score(self, X, y=None):
        return make_objective(self.model, self.target)(X)


# ---------------------------------------------------------------------------
# scans


@dataclass(frozen=True)
class Plateau:
    threshold: float
    lo: float
    hi: float

    @property
    def width(self):
        return 0.0 if np.isnan(self.lo) else float(self.hi - self.lo)

    @property
    def center(self):
        return float("nan") if np.isnan(self.lo) else 0.5 * (self.lo + self.hi)


def extract_plateau(axis, fidelity, threshold):
    """Longest contiguous run of grid points with ``fidelity >= threshold``.

    Ties go to the run nearest zero on the axis. The edges are the outermost
    grid points of the run (no interpolation).
    """
    above = np.asarray(fidelity) >= threshold
    runs, start = [], None
    for i, a in enumerate(np.r_[above, False]):
        if a and start is None:
            start = i
        elif not a and start is not None:
            runs.append((start, i - 1))
            start = None
    if not runs:
        return Plateau(threshold, float("nan"), float("nan"))
    axis = np.asarray(axis)

    def key(run):
        lo, hi = axis[run[0]], axis[run[1]]
        dist = 0.0 if lo <= 0 <= hi else min(abs(lo), abs(hi))
        return (-(hi - lo), dist)

    lo, hi = min(runs, key=key)
    return Plateau(threshold, float(axis[lo]), float(axis[hi]))


@dataclass(frozen=True)
class ScanResult:
    """Fidelity against one error axis, with its above-threshold plateau."""

    axis_name: str
    axis: np.ndarray
    fidelity: np.ndarray
    threshold: float = 0.9999
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        fid = np.asarray(self.fidelity, dtype=float)
        if axis.shape != fid.shape or axis.ndim != 1:
            raise ValueError("axis and fidelity must be matching 1-d arrays")
        if np.any(np.diff(axis) <= 0):
            raise ValueError("axis must be strictly increasing")
        if np.any((fid < 0) | (fid > 1)):
            raise ValueError("fidelities must lie in [0, 1]")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "fidelity", fid)

    @property
    def plateau(self):
        return extract_plateau(self.axis, self.fidelity, self.threshold)

    def with_threshold(self, threshold):
        return replace(self, threshold=threshold)

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.axis_name, "fidelity"])
        for a, f in zip(self.axis, self.fidelity):
            w.writerow([f"{a:.12g}", f"{f:.12g}"])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def metadata(self):
        p = self.plateau
        return {
            "schema_version": SCHEMA_VERSION,
            "axis": self.axis_name,
            "n_points": int(self.axis.size),
            "threshold": self.threshold,
            "plateau": {"lo": _num(p.lo), "hi": _num(p.hi), "width": _num(p.width), "center": _num(p.center)},
            **self.meta,
        }

    def to_json(self, path=None):
        text = json.dumps(self.metadata(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def _num(x):
    return None if not np.isfinite(x) else float(f"{x:.12g}")


def model_hash(obj):
    """Short content hash of a model description (its ``repr``)."""
    return hashlib.sha256(repr(obj).encode()).hexdigest()[:16]


def _workers(workers):
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("PULSEFORGE_THREADS")
    return max(1, int(env)) if env else 1


def _evaluate(fn, values, workers):
    n = _workers(workers)
    if n == 1:
        return [fn(v) for v in values]
    with ThreadPoolExecutor(n) as pool:
        return list(pool.map(fn, values))


def _check_grid(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("axis grid empty")
    return grid


def scan_delta(pulse, model_family, target, grid, threshold=0.9999, workers=None, axis_name="delta", meta=None):
    """Fidelity over a grid of quasi-static errors.

    ``model_family(delta)`` returns a propagator ``pulse -> U``; each grid
    point is independent, so evaluation order does not matter.
    """
    grid = _check_grid(grid)

    def point(d):
        return float(target.fidelity(model_family(d)(pulse)))

    fid = np.clip(_evaluate(point, grid, workers), 0.0, 1.0)
    return ScanResult(axis_name, grid, fid, threshold, dict(meta or {}))


def scan_amplitude(pulse, model, target, grid, threshold=0.9999, workers=None, meta=None):
    """Fidelity against a multiplicative amplitude error."""
    grid = _check_grid(grid)

    def point(k):
        return float(target.fidelity(model(pulse.scaled(k))))

    fid = np.clip(_evaluate(point, grid, workers), 0.0, 1.0)
    return ScanResult("amplitude_scale", grid, fid, threshold, dict(meta or {}))
