"""Ideal gates on computational subspaces and the spectated exchange block."""

from dataclasses import dataclass
import re

import numpy as np

from ._validation import check_unitary
from .devices import spectated_total_hamiltonian
from .operators import I2, SX, SZ, rx, su2_propagate, trace_fidelity

CZ = np.diag([1, 1, 1, -1]).astype(complex)
# +i on the swapped amplitudes
ISWAP = np.array([[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]], dtype=complex)


@dataclass(frozen=True)
class GateTarget:
    """Ideal unitary on rows ``subspace`` of a larger propagator.

    Parameters
    ----------
    matrix : array (d, d)
        Ideal gate.
    subspace : tuple of int, optional
        Rows of the computational states in the realised propagator; defaults
        to ``0 .. d-1``.
    phase_blocks : tuple of tuples, optional
        Subspace positions sharing one free global phase each.
    local_phases : bool
        Maximise over single-qubit Z phases after the gate (``d = 2**n``).
    """

    matrix: np.ndarray
    subspace: tuple = None
    phase_blocks: tuple = None
    local_phases: bool = False
    name: str = ""

    def __post_init__(self):
        m = check_unitary(np.asarray(self.matrix, dtype=complex), "target", tol=1e-12)
        object.__setattr__(self, "matrix", m)
        sub = tuple(range(m.shape[0])) if self.subspace is None else tuple(int(i) for i in self.subspace)
        if len(sub) != m.shape[0] or len(set(sub)) != len(sub):
            raise ValueError("subspace must list one distinct row per gate dimension")
        object.__setattr__(self, "subspace", sub)
        if self.local_phases and 2 ** int(np.log2(m.shape[0])) != m.shape[0]:
            raise ValueError("local phase freedom needs a 2**n dimensional gate")

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def n_qubits(self):
        return int(round(np.log2(self.dim)))

    def fidelity(self, u):
        return trace_fidelity(u, self.matrix, subspace=self.subspace, phase_blocks=self.phase_blocks,
                              local_phases=self.n_qubits if self.local_phases else None)

    def on(self, subspace, phase_blocks=None):
        """Same gate placed on other rows of a larger space."""
        return GateTarget(self.matrix, tuple(subspace), phase_blocks or self.phase_blocks, self.local_phases, self.name)


_ANGLE = re.compile(r"^\s*([-+]?\d*\.?\d*)\s*\*?\s*(pi)?\s*(?:/\s*(\d+\.?\d*))?\s*$")


def _parse_angle(text):
    m = _ANGLE.match(text)
    if not m or not (m.group(1) or m.group(2)):
        raise ValueError(f"cannot parse angle {text!r}")
    coef = m.group(1)
    value = float(coef) if coef not in ("", "+", "-") else (-1.0 if coef == "-" else 1.0)
    if m.group(2):
        value *= np.pi
    if m.group(3):
        value /= float(m.group(3))
    return value


def standard_gate(name, theta=None, local_phases=None):
    """Named gate: ``X``, ``Rx`` (with ``theta`` or as ``"Rx(pi/8)"``), ``CZ`` or ``iSWAP``.

    Single-qubit targets carry only the global phase freedom of the trace
    fidelity; two-qubit targets default to single-qubit Z phase freedom.
    """
    key = name.strip()
    m = re.match(r"^rx\s*\((.*)\)$", key, flags=re.IGNORECASE)
    if m:
        theta = _parse_angle(m.group(1))
        key = "rx"
    key = key.lower()
    if key == "x":
        return GateTarget(SX, name="X")
    if key == "rx":
        if theta is None:
            raise ValueError("Rx needs an angle")
        return GateTarget(rx(theta), name=f"Rx({theta:.12g})")
    if key == "cz":
        return GateTarget(CZ, local_phases=True if local_phases is None else local_phases, name="CZ")
    if key == "iswap":
        return GateTarget(ISWAP, local_phases=True if local_phases is None else local_phases, name="iSWAP")
    raise ValueError(f"unknown gate {name!r}")


def embed_gate(matrix, subspace, dim):
    """Place ``matrix`` on rows ``subspace`` of a ``dim``-dimensional identity."""
    matrix = np.asarray(matrix, dtype=complex)
    out = np.eye(dim, dtype=complex)
    idx = np.asarray(subspace, dtype=int)
    if idx.size != matrix.shape[0]:
        raise ValueError("subspace size does not match the gate")
    out[np.ix_(idx, idx)] = matrix
    return out


def extract_block(u, subspace):
    idx = np.asarray(subspace, dtype=int)
    return np.asarray(u)[np.ix_(idx, idx)]


SWAP_BLOCK = ISWAP[1:3, 1:3]


def spectated_entangler(g_pulse, delta, n_steps=4096, amplitude_scale=1.0):
    """Exchange block ``span{|01>, |10>}`` under a quasi-static error ``delta``.

    The block Hamiltonian is the middle of :func:`spectated_total_hamiltonian`:
    ``g(t) X + (delta / 2) Z`` with ``|01>`` first. Returns the 2x2 block
    propagator and its trace fidelity (global phase free) against the
    iSWAP swap block.
    """
    dt = g_pulse.duration / n_steps
    t = dt * (np.arange(n_steps) + 0.5)
    g = amplitude_scale * np.real(np.asarray(g_pulse(t)))
    block = spectated_total_hamiltonian(delta, 1.0)[1:3, 1:3]
    hz = np.full(n_steps, block[0, 0].real)
    u = su2_propagate(g, np.zeros(n_steps), hz, dt)
    return u, trace_fidelity(u, SWAP_BLOCK)


def detuned_rabi_block(g, delta, duration):
    """Closed form of :func:`spectated_entangler` for constant ``g``."""
    w = np.hypot(g, delta / 2)
    n = np.array([g, 0.0, delta / 2]) / w
    return np.cos(w * duration) * I2 - 1j * np.sin(w * duration) * (n[0] * SX + n[2] * SZ)
