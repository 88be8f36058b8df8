"""Error-robust gates from space curves.

For a qubit driven by ``H0 = (Omega / 2)(cos(alpha) X + sin(alpha) Y)`` under a
quasi-static error ``-(delta / 2) Z``, the interaction-picture error generator
is ``-(delta / 2) n(t) . sigma`` with ``n . sigma = U0^dag Z U0``. The curve
``r(t) = int_0^t n`` has unit speed, curvature ``Omega`` and torsion
``d alpha / dt``; the gate is first-order robust when the curve closes and
second-order robust when, in addition, it encloses no net (vector) area.

Planar curves in the ``(x, y)`` plane correspond to ``n = (0, y', x')``: the
curve starts along ``+x`` (``n = Z`` at ``t = 0``) and turns towards ``+y``
(``Y``) for positive drive. Negative signed curvature is realised with
``alpha = pi``.
"""

from dataclasses import dataclass, field
import json

import numpy as np
from scipy.integrate import cumulative_simpson, simpson
from scipy.interpolate import CubicSpline, make_interp_spline
from scipy.optimize import minimize

from ._validation import DegeneracyError
from .operators import SZ, pauli_vector, rx, su2_propagate, trace_fidelity
from .pulses import Pulse

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ErrorCurve:
    """Unit-speed curve sampled on a uniform arc-length (time) grid.

    Attributes
    ----------
    t : ndarray (n + 1,)
        Arc length, equal to time in ns; ``t[-1]`` is the gate time.
    r, dr, ddr, dddr : ndarray (n + 1, dim)
        Position and its first three arc-length derivatives.
    kind, params
        Origin recorded for serialisation: ``"family"`` with the family name
        and parameters, or ``"spline"`` with control points.
    """

    t: np.ndarray
    r: np.ndarray
    dr: np.ndarray
    ddr: np.ndarray
    dddr: np.ndarray
    kind: str = "spline"
    params: dict = field(default_factory=dict, compare=False)

    @property
    def duration(self):
        return float(self.t[-1])

    @property
    def dimension(self):
        return self.r.shape[1]

    @property
    def speed(self):
        return np.linalg.norm(self.dr, axis=1)

    @property
    def curvature(self):
        return np.linalg.norm(self.ddr, axis=1)

    @property
    def signed_curvature(self):
        if self.dimension != 2:
            raise ValueError("signed curvature is defined for planar curves")
        return self.dr[:, 0] * self.ddr[:, 1] - self.dr[:, 1] * self.ddr[:, 0]

    @property
    def closed(self):
        return bool(np.linalg.norm(self.r[-1] - self.r[0]) < 1e-6 * self.duration)

    @classmethod
    def from_tangent_angle(cls, psi, dpsi, ddpsi, duration, n_points=4096, params=None):
        """Planar curve with tangent angle ``psi(s)``, ``s = t / T`` in [0, 1].

        ``dpsi`` and ``ddpsi`` are the first two derivatives in ``s``. The
        tangent and its derivatives are exact; positions are integrated with
        cumulative Simpson.
        """
        s = np.linspace(0.0, 1.0, n_points + 1)
        T = float(duration)
        p, dp, ddp = psi(s), dpsi(s) / T, ddpsi(s) / T**2
        tan = np.column_stack([np.cos(p), np.sin(p)])
        nor = np.column_stack([-np.sin(p), np.cos(p)])
        t = s * T
        r = np.vstack([np.zeros(2), cumulative_simpson(tan, x=t, axis=0)])
        return cls(t, r, tan, dp[:, None] * nor, ddp[:, None] * nor - (dp**2)[:, None] * tan,
                   kind="family", params=params or {})

    def to_dict(self):
        doc = {"schema_version": SCHEMA_VERSION, "dimension": self.dimension, "kind": self.kind,
               "closed": self.closed}
        if self.kind == "family":
            doc["family_params"] = self.params
        else:
            doc["control_points"] = self.params.get("control_points", self.r[:: max(1, len(self.r) // 256)].tolist())
        return doc

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, doc, n_points=2048):
        if doc.get("kind") == "family":
            fp = dict(doc["family_params"])
            name = fp.pop("family")
            return FAMILIES[name](**fp)
        if doc.get("kind") != "spline":
            raise ValueError("curve document needs kind 'family' or 'spline'")
        pts = np.asarray(doc["control_points"], dtype=float)
        if pts.ndim != 2 or pts.shape[1] != doc.get("dimension", pts.shape[1]) or pts.shape[1] not in (2, 3):
            raise ValueError("control points must be an (N, 2) or (N, 3) array matching dimension")
        return arclength_reparametrize(pts, n_points=n_points, closed=bool(doc.get("closed", False)))

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _raw_samples(raw, m, closed):
    u = np.linspace(0.0, 1.0, m)
    if callable(raw):
        return u, make_interp_spline(u, np.asarray(raw(u), dtype=float), k=5)
    pts = np.asarray(raw, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 6:
        raise ValueError("need at least 6 curve points")
    if closed:
        if not np.allclose(pts[0], pts[-1]):
            pts = np.vstack([pts, pts[:1]])
        spl = CubicSpline(np.linspace(0.0, 1.0, len(pts)), pts, bc_type="periodic")
    else:
        spl = make_interp_spline(np.linspace(0.0, 1.0, len(pts)), pts, k=min(5, len(pts) - 1))
    return u, spl


def arclength_reparametrize(raw, n_points=2048, closed=False, oversample=8, kind="spline", params=None):
    """Resample a regular curve uniformly in arc length.

    Parameters
    ----------
    raw : callable or array (N, dim)
        Either ``u -> points`` on ``u`` in [0, 1] or control points, uniformly
        spaced in the parameter, interpolated by a spline (periodic when
        ``closed``).
    n_points : int
        Number of arc-length intervals in the result.

    Raises
    ------
    DegeneracyError
        If the speed vanishes at an interior parameter value.
    """
    u, spl = _raw_samples(raw, oversample * n_points + 1, closed)
    dspl = spl.derivative()
    speed = np.linalg.norm(dspl(u), axis=1)
    scale = speed.max()
    if scale == 0:
        raise DegeneracyError("curve has zero length")
    bad = np.flatnonzero(speed[1:-1] < 1e-9 * scale)
    if bad.size:
        raise DegeneracyError(f"zero speed at parameter u = {u[bad[0] + 1]:.6g}")
    arc = make_interp_spline(u, speed, k=5).antiderivative()
    total = float(arc(1.0))
    s = np.linspace(0.0, total, n_points + 1)
    uj = np.interp(s, arc(u), u)
    for _ in range(8):
        uj = np.clip(uj - (arc(uj) - s) / np.linalg.norm(dspl(uj), axis=1), 0.0, 1.0)
    pts = spl(uj)
    fit = make_interp_spline(s, pts, k=5)
    if params is None and not callable(raw):
        params = {"control_points": np.asarray(raw, dtype=float).tolist()}
    return ErrorCurve(s, pts, fit.derivative(1)(s), fit.derivative(2)(s), fit.derivative(3)(s),
                      kind=kind, params=params or {})


# ---------------------------------------------------------------------------
# analytic families (each starts at the origin heading along +x)


def circle(radius=1.0, turns=1.0, n_points=2048):
    a = 2 * np.pi * turns

    def raw(u):
        return np.column_stack([radius * np.sin(a * u), radius * (1 - np.cos(a * u))])

    return arclength_reparametrize(raw, n_points, kind="family",
                                   params={"family": "circle", "radius": radius, "turns": turns})


def line(length=1.0, n_points=2048):
    def raw(u):
        return np.column_stack([length * u, np.zeros_like(u)])

    return arclength_reparametrize(raw, n_points, kind="family", params={"family": "line", "length": length})


def lemniscate(scale=1.0, n_points=2048):
    """Lemniscate of Bernoulli traversed once from its node; equal lobes."""

    def raw(u):
        th = 2 * np.pi * u - np.pi / 2
        d = 1 + np.sin(th) ** 2
        pts = np.column_stack([scale * np.cos(th) / d, scale * np.sin(th) * np.cos(th) / d])
        # rotate so the curve leaves the node along +x
        c = np.cos(np.pi / 4)
        return pts @ np.array([[c, -c], [c, c]]).T

    return arclength_reparametrize(raw, n_points, kind="family", params={"family": "lemniscate", "scale": scale})


def helix(radius=1.0, pitch=0.2, turns=1.0, n_points=2048):
    """``(R cos u, R sin u, p u)``; curvature ``R/(R^2+p^2)``, torsion ``p/(R^2+p^2)``."""
    a = 2 * np.pi * turns

    def raw(u):
        return np.column_stack([radius * np.cos(a * u), radius * np.sin(a * u), pitch * a * u])

    return arclength_reparametrize(raw, n_points, kind="family",
                                   params={"family": "helix", "radius": radius, "pitch": pitch, "turns": turns})


def tangent_angle_curve(total_turn, coefficients, duration, n_points=4096):
    """Planar curve with tangent angle
    ``psi(s) = Phi (s - sin(2 pi s) / (2 pi)) + sum_k b_k (1 - cos(2 pi k s))``.

    The drive ``psi' / T`` vanishes at both ends and the net turn is ``Phi``.
    """
    b = np.asarray(coefficients, dtype=float)
    k = np.arange(1, b.size + 1)
    tp = 2 * np.pi

    def psi(s):
        s = np.asarray(s)[..., None]
        return total_turn * (s[..., 0] - np.sin(tp * s[..., 0]) / tp) + np.sum(b * (1 - np.cos(tp * k * s)), -1)

    def dpsi(s):
        s = np.asarray(s)[..., None]
        return total_turn * (1 - np.cos(tp * s[..., 0])) + np.sum(b * tp * k * np.sin(tp * k * s), -1)

    def ddpsi(s):
        s = np.asarray(s)[..., None]
        return total_turn * tp * np.sin(tp * s[..., 0]) + np.sum(b * (tp * k) ** 2 * np.cos(tp * k * s), -1)

    params = {"family": "tangent_angle", "total_turn": float(total_turn), "coefficients": b.tolist(),
              "duration": float(duration)}
    return ErrorCurve.from_tangent_angle(psi, dpsi, ddpsi, duration, n_points, params)


FAMILIES = {
    "circle": circle,
    "line": line,
    "lemniscate": lemniscate,
    "helix": helix,
    "tangent_angle": tangent_angle_curve,
}


# ---------------------------------------------------------------------------
# curve -> pulse


@dataclass(frozen=True)
class ErgPulse:
    """Rabi rate ``omega`` and phase ``alpha`` on the curve's time grid."""

    t: np.ndarray
    omega: np.ndarray
    alpha: np.ndarray
    angle: float = None

    @property
    def duration(self):
        return float(self.t[-1])

    def complex_envelope(self):
        return self.omega * np.exp(1j * self.alpha)

    def to_pulse(self, n_samples=None, carrier=0.0):
        """Shared :class:`Pulse` (sampled); the envelope is ``(Omega / 2) e^{i alpha}``."""
        t, env = self.t, 0.5 * self.complex_envelope()
        if n_samples is not None:
            tn = np.linspace(0.0, self.duration, n_samples)
            env = CubicSpline(t, env.real)(tn) + 1j * CubicSpline(t, env.imag)(tn)
        if np.allclose(env.imag, 0.0, atol=1e-15):
            env = env.real
        return Pulse.sampled(env, self.duration, carrier)


def curve_to_pulse(curve, singular_fraction=0.01):
    """Drive amplitude from curvature and phase from integrated torsion.

    Raises
    ------
    DegeneracyError
        In 3D, if ``|r' x r''|`` vanishes on more than ``singular_fraction``
        of the grid, where the torsion and hence ``alpha`` are undefined.
    """
    omega = curve.curvature
    if curve.dimension == 2:
        alpha = np.where(curve.signed_curvature < 0, np.pi, 0.0)
        return ErgPulse(curve.t, omega, alpha)
    cross = np.cross(curve.dr, curve.ddr)
    c2 = np.sum(cross**2, axis=1)
    tiny = c2 < 1e-12 * max(c2.max(), 1e-300)
    if tiny.mean() > singular_fraction:
        raise DegeneracyError("curve is straight on a finite stretch; torsion undefined (use a planar curve)")
    rate = np.zeros_like(c2)
    rate[~tiny] = np.sum(cross[~tiny] * curve.dddr[~tiny], axis=1) / c2[~tiny]
    if tiny.any():
        rate[tiny] = np.interp(curve.t[tiny], curve.t[~tiny], rate[~tiny])
    alpha = np.r_[0.0, cumulative_simpson(rate, x=curve.t)]
    return ErgPulse(curve.t, omega, alpha)


# ---------------------------------------------------------------------------
# robustness conditions


def order1_residual(curve):
    """End-to-end displacement ``r(T) - r(0)``."""
    return curve.r[-1] - curve.r[0]


def order2_residual(curve):
    """``int (r - r(0)) x r' dt``: twice the enclosed vector (planar: signed) area."""
    rel = curve.r - curve.r[0]
    if curve.dimension == 2:
        integrand = rel[:, 0] * curve.dr[:, 1] - rel[:, 1] * curve.dr[:, 0]
    else:
        integrand = np.cross(rel, curve.dr)
    return simpson(integrand, x=curve.t, axis=0)


@dataclass(frozen=True)
class RotationAngle:
    """Realised rotation angle and which arctangent branch produced it."""

    phi: float
    branch: str
    fidelity: float

    def __float__(self):
        return self.phi


def rotation_angle(curve, n_steps=4096):
    """Rotation angle of a planar curve from its end tangents.

    The tangent geometry fixes the angle only up to ``pi`` and sign; the
    candidate whose ``Rx`` best matches the propagated pulse at ``delta = 0``
    is returned together with its branch label.
    """
    if curve.dimension != 2:
        raise ValueError("rotation_angle needs a planar curve")
    t0, t1 = curve.dr[0], curve.dr[-1]
    if np.linalg.norm(t0) < 0.5 or np.linalg.norm(t1) < 0.5:
        raise ValueError("end tangents are undefined")
    cross = t1[0] * t0[1] - t1[1] * t0[0]
    dot = float(t1 @ t0)
    base = np.arctan(abs(cross / dot)) if dot != 0 else np.pi / 2
    u = propagate_erg(curve_to_pulse(curve).to_pulse(), 0.0, n_steps)
    best = None
    for branch, phi in (("direct", base), ("plus_pi", base + np.pi)):
        for sgn in (1.0, -1.0):
            f = trace_fidelity(u, rx(sgn * phi))
            if best is None or f > best[2] + 1e-12:
                best = (np.angle(np.exp(1j * sgn * phi)), branch, f)
    phi, branch, f = best
    if np.isclose(abs(phi), np.pi):
        phi = np.pi
    return RotationAngle(float(phi), branch, float(f))


# ---------------------------------------------------------------------------
# propagation and verification


def propagate_erg(pulse, delta=0.0, n_steps=4096, keep_path=False, amplitude_scale=1.0):
    """Qubit propagator for ``Re(p) X + Im(p) Y - (delta / 2) Z``."""
    dt = pulse.duration / n_steps
    t = dt * (np.arange(n_steps) + 0.5)
    env = amplitude_scale * np.asarray(pulse(t), dtype=complex)
    return su2_propagate(env.real, env.imag, np.full(n_steps, -0.5 * delta), dt, keep_path)


def erg_fidelity(pulse, delta, angle, n_steps=4096, amplitude_scale=1.0):
    """``|Tr(Rx(angle)^dag U)| / 2`` under a static ``-(delta / 2) Z`` error."""
    return trace_fidelity(propagate_erg(pulse, delta, n_steps, amplitude_scale=amplitude_scale), rx(angle))


def _canonical(curve):
    # rigid motion taking the curve's initial frame to the one fixed by U0(0) = I
    rel = curve.r - curve.r[0]
    if curve.dimension == 2:
        tx, ty = curve.dr[0] / np.linalg.norm(curve.dr[0])
        rot = np.array([[tx, ty], [-ty, tx]])
        xy = rel @ rot.T
        return np.column_stack([np.zeros(len(xy)), xy[:, 1], xy[:, 0]])
    tan = curve.dr[0] / np.linalg.norm(curve.dr[0])
    nrm = curve.ddr[0] / np.linalg.norm(curve.ddr[0])
    binorm = np.cross(tan, nrm)
    frame = np.vstack([tan, nrm, binorm])
    target = np.array([[0, 0, 1], [0, 1, 0], [-1, 0, 0]], dtype=float)
    return rel @ frame.T @ target


def recovered_curve(pulse, duration=None, n_steps=8192):
    """Curve traced by ``U0^dag Z U0`` for an :class:`ErgPulse` or :class:`Pulse`."""
    p = pulse.to_pulse() if isinstance(pulse, ErgPulse) else pulse
    _, path = propagate_erg(p, 0.0, n_steps, keep_path=True)
    n = np.array([pauli_vector(u.conj().T @ SZ @ u) for u in path])
    t = np.linspace(0.0, p.duration, n_steps + 1)
    r = np.vstack([np.zeros(3), cumulative_simpson(n, x=t, axis=0)])
    return t, r


def verify_error_map(pulse, curve, n_steps=8192):
    """Largest distance between the curve and the one recovered from the pulse.

    The curve is first moved rigidly to the frame fixed by ``U0(0) = I``
    (initial tangent ``Z``, initial normal ``Y``); no fitting is involved.
    """
    if abs(pulse.duration - curve.duration) > 1e-9 * curve.duration:
        raise ValueError("pulse and curve durations differ")
    t, r = recovered_curve(pulse, n_steps=n_steps)
    ref = _canonical(curve)
    spl = make_interp_spline(curve.t, ref, k=5)
    return float(np.max(np.linalg.norm(r - spl(t), axis=1)))


# ---------------------------------------------------------------------------
# design


@dataclass(frozen=True)
class CurveDesign:
    curve: ErrorCurve
    angle: float
    order: int
    total_turn: float
    coefficients: np.ndarray

    def pulse(self):
        return curve_to_pulse(self.curve).to_pulse()


def _design_residuals(total_turn, b, order, n=2048):
    s = np.linspace(0.0, 1.0, n + 1)
    k = np.arange(1, len(b) + 1)
    psi = total_turn * (s - np.sin(2 * np.pi * s) / (2 * np.pi)) + (1 - np.cos(2 * np.pi * np.outer(s, k))) @ b
    c, sn = np.cos(psi), np.sin(psi)
    res = [simpson(c, x=s), simpson(sn, x=s)]
    if order >= 2:
        x = np.r_[0.0, cumulative_simpson(c, x=s)]
        y = np.r_[0.0, cumulative_simpson(sn, x=s)]
        res.append(simpson(x * sn - y * c, x=s))
    return np.array(res)


def design_planar_curve(angle, order=1, duration=50.0, n_modes=None, turns=(1, -1, 2, -2), seed=0,
                        n_starts=12, n_points=4096):
    """Closed planar curve realising ``Rx(angle)`` with first- or second-order robustness.

    Searches the tangent-angle family with net turn ``angle + 2 pi m`` for
    ``m`` in ``turns``, minimising the drive energy ``int psi'^2`` subject to
    closure (and zero enclosed area for ``order=2``). Deterministic for a
    given ``seed``.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    n_modes = n_modes or (2 + order)
    rng = np.random.default_rng(seed)
    k = np.arange(1, n_modes + 1)
    best = None
    for m in turns:
        phi_tot = angle + 2 * np.pi * m

        def energy(b):
            # int_0^1 psi'^2 ds in closed form
            return phi_tot**2 * 1.5 + 0.5 * np.sum((2 * np.pi * k * b) ** 2)

        def coarse(b):
            return _design_residuals(phi_tot, b, order, n=256)

        for _ in range(n_starts):
            b0 = rng.normal(0.0, 1.0, n_modes)
            res = minimize(energy, b0, method="SLSQP", constraints=[{"type": "eq", "fun": coarse}],
                           options={"maxiter": 200, "ftol": 1e-12})
            if np.linalg.norm(coarse(res.x)) < 1e-6 and (best is None or res.fun < best[0] - 1e-9):
                best = (res.fun, phi_tot, res.x)
    if best is None:
        raise DegeneracyError("no closed curve found for the requested angle")
    _, phi_tot, b = best
    fine = {"type": "eq", "fun": lambda x: _design_residuals(phi_tot, x, order)}
    b = minimize(lambda x: np.sum((x - b) ** 2), b, method="SLSQP", constraints=[fine],
                 options={"maxiter": 100, "ftol": 1e-16}).x
    curve = tangent_angle_curve(phi_tot, b, duration, n_points)
    return CurveDesign(curve, float(angle), order, float(phi_tot), b)
