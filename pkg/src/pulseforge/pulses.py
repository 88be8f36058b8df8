"""Smooth drive envelopes: truncated Fourier series or dense samples."""

from dataclasses import dataclass, field, replace
import json

import numpy as np
from scipy.interpolate import CubicSpline

from .operators import TWO_PI, ghz, mhz, to_ghz, to_mhz

SCHEMA_VERSION = 1
MIN_SAMPLES = 16

# "MHz" means MHz x 2pi (angular); "rad/us" is a plain angular rate per microsecond.
AMPLITUDE_UNITS = {
    "MHz": lambda v: mhz(v),
    "rad/us": lambda v: np.asarray(v, dtype=float) * 1e-3,
}
_AMP_KEYS = {"MHz": "C_MHz", "rad/us": "C_rad_per_us"}


@dataclass(frozen=True)
class Pulse:
    """Drive envelope Omega(t) on ``[0, duration]`` in rad/ns.

    A Fourier pulse evaluates ``sum_n C_n cos(2 pi n t / T + phi_n)`` for
    ``n = 0 .. N-1`` with ``phi_0 = 0``. A sampled pulse stores complex values
    on the uniform grid ``linspace(0, T, len(samples))`` and interpolates with
    a cubic spline. In the drive frame the envelope enters the target
    two-level block as ``Re(Omega) sigma_x + Im(Omega) sigma_y``.
    """

    duration: float
    amplitudes: np.ndarray = None
    phases: np.ndarray = None
    samples: np.ndarray = None
    carrier: float = 0.0
    _spline: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if (self.amplitudes is None) == (self.samples is None):
            raise ValueError("give either Fourier amplitudes or samples")
        if self.amplitudes is not None:
            amps = np.atleast_1d(np.asarray(self.amplitudes, dtype=float))
            phases = np.zeros_like(amps) if self.phases is None else np.asarray(self.phases, dtype=float)
            if phases.shape != amps.shape:
                raise ValueError("need one phase per amplitude")
            phases = phases.copy()
            phases[0] = 0.0
            object.__setattr__(self, "amplitudes", amps)
            object.__setattr__(self, "phases", phases)
        else:
            samples = np.asarray(self.samples, dtype=complex)
            if samples.ndim != 1 or samples.size < MIN_SAMPLES:
                raise ValueError(f"sampled pulses need at least {MIN_SAMPLES} samples")
            object.__setattr__(self, "samples", samples)
            t = np.linspace(0.0, self.duration, samples.size)
            splines = (CubicSpline(t, samples.real), CubicSpline(t, samples.imag))
            object.__setattr__(self, "_spline", splines)

    @property
    def form(self):
        return "fourier" if self.amplitudes is not None else "sampled"

    @property
    def n_harmonics(self):
        return None if self.amplitudes is None else self.amplitudes.size

    @property
    def is_real(self):
        return self.form == "fourier" or bool(np.all(self.samples.imag == 0))

    @classmethod
    def fourier(cls, amplitudes, phases=None, duration=1.0, carrier=0.0):
        return cls(duration=duration, amplitudes=amplitudes, phases=phases, carrier=carrier)

    @classmethod
    def sampled(cls, samples, duration, carrier=0.0):
        return cls(duration=duration, samples=samples, carrier=carrier)

    @classmethod
    def cosine(cls, area, duration, carrier=0.0):
        """Raised-cosine envelope ``A (1 - cos(2 pi t / T))`` with the given area."""
        a = area / duration
        return cls.fourier([a, -a], [0.0, 0.0], duration, carrier)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.form == "fourier":
            n = np.arange(self.amplitudes.size)
            arg = TWO_PI * np.multiply.outer(t, n) / self.duration + self.phases
            return np.cos(arg) @ self.amplitudes
        re, im = self._spline
        out = re(t) + 1j * im(t)
        return out.real if self.is_real else out

    def area(self):
        """Integral of the envelope over the pulse."""
        if self.form == "fourier":
            return float(self.amplitudes[0] * self.duration)
        re, im = self._spline
        val = re.integrate(0, self.duration) + 1j * im.integrate(0, self.duration)
        return val.real if self.is_real else val

    def scaled(self, factor):
        if self.form == "fourier":
            return replace(self, amplitudes=self.amplitudes * factor)
        return replace(self, samples=self.samples * factor)

    def to_sampled(self, n_samples=1024):
        t = np.linspace(0.0, self.duration, n_samples)
        return Pulse.sampled(self(t), self.duration, self.carrier)

    def to_fourier(self, n_harmonics):
        """Least-squares Fourier fit of a real envelope at its sample points."""
        if self.form == "fourier":
            return self
        if not self.is_real:
            raise ValueError("only real envelopes have a cosine-series form")
        t = np.linspace(0.0, self.duration, self.samples.size)
        n = np.arange(n_harmonics)
        w = TWO_PI * np.outer(t, n) / self.duration
        basis = np.hstack([np.cos(w), -np.sin(w[:, 1:])])
        coef, *_ = np.linalg.lstsq(basis, self.samples.real, rcond=None)
        a = coef[:n_harmonics]
        b = np.r_[0.0, coef[n_harmonics:]]
        amps = np.hypot(a, b)
        amps[0] = a[0]
        return Pulse.fourier(amps, np.arctan2(b, a), self.duration, self.carrier)

    def to_dict(self, amp_unit="MHz"):
        out = {"schema_version": SCHEMA_VERSION, "form": self.form, "T_ns": float(self.duration),
               "carrier_GHz": float(to_ghz(self.carrier))}
        if amp_unit not in AMPLITUDE_UNITS:
            raise ValueError(f"unknown amplitude unit {amp_unit!r}")
        scale = to_mhz if amp_unit == "MHz" else (lambda v: np.asarray(v) * 1e3)
        key = _AMP_KEYS[amp_unit]
        out["amp_unit"] = amp_unit
        if self.form == "fourier":
            out["harmonics"] = [
                {"n": int(n), key: _num(scale(c)), "phi_rad": _num(p)}
                for n, (c, p) in enumerate(zip(self.amplitudes, self.phases))
            ]
        else:
            vals = self.samples
            out["samples_re"] = [_num(scale(v)) for v in vals.real]
            out["samples_im"] = [_num(scale(v)) for v in vals.imag]
        return out

    def to_json(self, path=None, amp_unit="MHz"):
        text = json.dumps(self.to_dict(amp_unit), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, doc):
        if doc.get("form") not in ("fourier", "sampled"):
            raise ValueError("pulse document needs form 'fourier' or 'sampled'")
        if "T_ns" not in doc:
            raise ValueError("pulse document missing T_ns")
        unit = doc.get("amp_unit", "MHz")
        if unit not in AMPLITUDE_UNITS:
            raise ValueError(f"unknown amplitude unit {unit!r}")
        conv = AMPLITUDE_UNITS[unit]
        carrier = float(ghz(doc.get("carrier_GHz", 0.0)))
        if doc["form"] == "fourier":
            harm = sorted(doc["harmonics"], key=lambda h: h["n"])
            if [h["n"] for h in harm] != list(range(len(harm))):
                raise ValueError("harmonics must be numbered 0..N-1")
            key = _AMP_KEYS[unit]
            amps = conv([h[key] for h in harm])
            phases = [h.get("phi_rad", 0.0) for h in harm]
            return cls.fourier(amps, phases, float(doc["T_ns"]), carrier)
        samples = conv(doc["samples_re"]) + 1j * conv(doc.get("samples_im", [0.0] * len(doc["samples_re"])))
        return cls.sampled(samples, float(doc["T_ns"]), carrier)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _num(x):
    return float(f"{float(x):.12g}")
