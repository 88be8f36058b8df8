"""Device Hamiltonians: two-level pairs, anharmonic oscillator chains, dressing.

The chain Hamiltonian is

    H = sum_j (w_j n_j - a_j/2 n_j (n_j - 1)) + sum_(i,j) g_ij X_ij

where ``X_ij`` is the charge coupling ``(a_i + a_i^dag)(a_j + a_j^dag)`` or the
exchange form ``a_i^dag a_j + a_i a_j^dag``. Drives act on one node as
``(Omega e^{-i w_d t} + c.c.)(a + a^dag)`` so that the resonant rotating-frame
block reads ``Re(Omega) sigma_x + Im(Omega) sigma_y``.
"""

from dataclasses import dataclass, field
import itertools
import json

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._validation import CapacityError, ContractError
from .operators import (
    SP,
    SX,
    SZ,
    TimeGrid,
    destroy,
    embed,
    ghz,
    kron,
    mhz,
    propagate,
    to_ghz,
    to_mhz,
)

MAX_DIM = 64
SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# two-level pair


@dataclass(frozen=True)
class BipartitePair:
    """Intruder and target two-level systems with ``g sigma_x sigma_x`` coupling.

    Basis order is ``|intruder target>``: 00, 01, 10, 11.
    """

    omega_i: float
    omega_t: float
    g: float

    @property
    def detuning(self):
        return self.omega_i - self.omega_t

    @property
    def epsilon(self):
        return float(np.sqrt(4 * self.g**2 + self.detuning**2))

    @property
    def upsilon_plus(self):
        return float(np.sqrt(4 * self.g**2 + (self.epsilon + self.detuning) ** 2))

    @property
    def upsilon_minus(self):
        return float(np.sqrt(4 * self.g**2 + (self.epsilon - self.detuning) ** 2))

    @property
    def dipole_ratios(self):
        """``((D + eps)/Y+, 2g/Y-)``: target dipole in the two intruder subspaces."""
        return (self.detuning + self.epsilon) / self.upsilon_plus, 2 * self.g / self.upsilon_minus

    def hamiltonian(self, coupling="xx"):
        h = -self.omega_i / 2 * kron(SZ, np.eye(2)) - self.omega_t / 2 * kron(np.eye(2), SZ)
        if coupling == "xx":
            return h + self.g * kron(SX, SX)
        if coupling == "exchange":
            return h + self.g * (kron(SP, SP.T) + kron(SP.T, SP))
        raise ValueError(f"unknown coupling {coupling!r}")

    def target_raising(self):
        return kron(np.eye(2), SP)


@dataclass(frozen=True)
class DressedBasis:
    transform: np.ndarray
    h_diag: np.ndarray
    ladder: np.ndarray
    labels: tuple


def _mixing_half_angles(pair):
    # single-excitation block -(D/2) Z + g X; Bloch angle atan2(2g, -D)
    if pair.g == 0:
        # bare states; exact zeros rather than cos(pi/2)
        return (0.0, 1.0) if pair.detuning > 0 else (1.0, 0.0)
    beta = np.arctan2(2 * pair.g, -pair.detuning)
    return np.cos(beta / 2), np.sin(beta / 2)


def eq_dipole_matrix(pair):
    """Closed-form dressed raising operator of the target (exchange-coupled pair).

    Columns/rows: 00, lower mixed state, upper mixed state, 11. For ``g > 0``
    the entries are ``-(D + eps)/Y+``, ``2g/Y+``, ``(eps - D)/Y-`` and ``2g/Y-``;
    the half-angle form used here also covers ``g <= 0``.
    """
    c, s = _mixing_half_angles(pair)
    m = np.zeros((4, 4))
    m[1, 0] = -s
    m[2, 0] = c
    m[3, 1] = c
    m[3, 2] = s
    return m


def dressed_basis(pair, coupling="exchange"):
    """Eigenbasis of the undriven pair and the target raising operator in it.

    The transform columns are ordered 00, lower mixed state, upper mixed state,
    11, with the mixed states written as in the closed-form dipole matrix.
    For exchange coupling the transform is exact; for ``"xx"`` coupling it is
    computed numerically in the same ordering.
    """
    if pair.epsilon == 0:
        raise ContractError("degenerate pair: g = 0 and zero detuning")
    h0 = pair.hamiltonian(coupling)
    c, s = _mixing_half_angles(pair)
    ref = np.zeros((4, 4), dtype=complex)
    ref[0, 0] = ref[3, 3] = 1
    ref[1:3, 1] = [-s, c]
    ref[1:3, 2] = [c, s]
    if coupling == "exchange":
        v = ref
    else:
        _, vecs = np.linalg.eigh(h0)
        # align with the exchange-form columns by overlap
        rows, cols = linear_sum_assignment(-np.abs(ref.conj().T @ vecs) ** 2)
        v = vecs[:, cols]
        for k in range(4):
            ph = ref[:, k].conj() @ v[:, k]
            v[:, k] *= np.conj(ph) / abs(ph)
    h_diag = v.conj().T @ h0 @ v
    ladder = v.conj().T @ pair.target_raising() @ v
    return DressedBasis(v, np.real(np.diag(h_diag)), ladder, ("00", "01", "10", "11"))


# ---------------------------------------------------------------------------
# oscillator chains


@dataclass(frozen=True)
class Node:
    name: str
    omega: float
    alpha: float = 0.0
    levels: int = 3


@dataclass(frozen=True)
class Coupling:
    nodes: tuple
    g: float
    form: str = "charge"


@dataclass(frozen=True)
class TransmonChain:
    """Anharmonic oscillators with pairwise couplings.

    ``target`` and ``intruder`` name the qubits whose computational states
    define the gate subspace; any other nodes stay in their ground state.
    """

    nodes: tuple
    couplings: tuple = ()
    target: str = None
    intruder: str = None
    _ops: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes = tuple(self.nodes)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "couplings", tuple(self.couplings))
        for n in nodes:
            if n.levels < 2:
                raise ValueError(f"node {n.name} needs at least 2 levels")
        if self.dim > MAX_DIM:
            raise CapacityError(f"Hilbert dimension {self.dim} exceeds cap {MAX_DIM}")
        names = [n.name for n in nodes]
        if len(set(names)) != len(names):
            raise ValueError("node names must be unique")
        for c in self.couplings:
            for nm in c.nodes:
                if nm not in names:
                    raise ValueError(f"coupling references unknown node {nm!r}")
            if c.form not in ("charge", "exchange"):
                raise ValueError(f"unknown coupling form {c.form!r}")
        for nm in (self.target, self.intruder):
            if nm is not None and nm not in names:
                raise ValueError(f"unknown node {nm!r}")

    @property
    def dims(self):
        return tuple(n.levels for n in self.nodes)

    @property
    def dim(self):
        return int(np.prod(self.dims))

    def index(self, name):
        return [n.name for n in self.nodes].index(name)

    def lowering(self, name):
        i = self.index(name)
        return embed(destroy(self.nodes[i].levels), i, self.dims)

    def number_total(self):
        return sum(self._number(i) for i in range(len(self.nodes)))

    def _number(self, i):
        a = embed(destroy(self.nodes[i].levels), i, self.dims)
        return a.conj().T @ a

    def static_hamiltonian(self, omega_frame=0.0, rwa=False):
        """Time-independent part in a frame rotating at ``omega_frame``.

        With ``omega_frame = 0`` this is the lab-frame Hamiltonian. With
        ``rwa=True`` the number-nonconserving coupling terms are dropped.
        """
        h = np.zeros((self.dim, self.dim), dtype=complex)
        for i, node in enumerate(self.nodes):
            a = embed(destroy(node.levels), i, self.dims)
            n = a.conj().T @ a
            h += (node.omega - omega_frame) * n - node.alpha / 2 * (a.conj().T @ a.conj().T @ a @ a)
        for c in self.couplings:
            a = self.lowering(c.nodes[0])
            b = self.lowering(c.nodes[1])
            h += c.g * (a.conj().T @ b + a @ b.conj().T)
            if c.form == "charge" and omega_frame == 0.0 and not rwa:
                h += c.g * (a @ b + a.conj().T @ b.conj().T)
        return h

    def _fast_coupling_terms(self, omega_frame, rwa):
        # a b picks up exp(-2 i w_f t) in the rotating frame
        if rwa:
            return []
        out = []
        for c in self.couplings:
            if c.form == "charge" and omega_frame != 0.0:
                a = self.lowering(c.nodes[0])
                b = self.lowering(c.nodes[1])
                out.append((c.g * (a @ b), 2 * omega_frame))
        return out

    def bare_index(self, occupation):
        """Row index of a bare product state given ``{name: level}``."""
        digits = [occupation.get(n.name, 0) for n in self.nodes]
        return int(np.ravel_multi_index(digits, self.dims))

    def dress(self, hamiltonian=None):
        """Eigenvalues and eigenvectors labelled by maximum overlap with bare states.

        Returns ``(energies, vectors)`` where column ``k`` of ``vectors`` is the
        dressed state adiabatically connected to bare state ``k`` and its
        overlap with that bare state is real and positive.
        """
        h = self.static_hamiltonian() if hamiltonian is None else hamiltonian
        w, v = np.linalg.eigh(h)
        # ties resolve to the lower bare index through the assignment order
        rows, cols = linear_sum_assignment(-np.abs(v) ** 2)
        order = np.empty(self.dim, dtype=int)
        order[rows] = cols
        v = v[:, order]
        w = w[order]
        ph = np.diag(v).copy()
        v = v * (np.conj(ph) / np.abs(ph))
        return w, v

    def computational_indices(self):
        if self.target is None or self.intruder is None:
            raise ValueError("chain needs target and intruder names")
        return [
            self.bare_index({self.intruder: i, self.target: t}) for i, t in itertools.product((0, 1), repeat=2)
        ]

    def drive_frequency(self):
        """Dressed target transition with the intruder in its ground state."""
        w, _ = self.dress()
        idx = self.computational_indices()
        return float(w[idx[1]] - w[idx[0]])


def effective_splitting(model, target=None, intruder=None):
    """Conditional shift ``(E11 - E10) - (E01 - E00)`` of the target transition.

    Labels are ``|intruder target>``. Positive values mean the target
    transition is higher when the intruder is excited.
    """
    if isinstance(model, BipartitePair):
        w, v = np.linalg.eigh(model.hamiltonian("xx"))
        rows, cols = linear_sum_assignment(-np.abs(v) ** 2)
        e = np.empty(4)
        e[rows] = w[cols]
        return float(e[3] - e[2] - e[1] + e[0])
    chain = model
    if target is not None or intruder is not None:
        chain = TransmonChain(chain.nodes, chain.couplings, target or chain.target, intruder or chain.intruder)
    w, _ = chain.dress()
    i00, i01, i10, i11 = chain.computational_indices()
    return float(w[i11] - w[i10] - w[i01] + w[i00])


def perturbative_splitting(chain):
    """Second-order Rayleigh-Schroedinger estimate of :func:`effective_splitting`."""
    h = chain.static_hamiltonian()
    e0 = np.real(np.diag(h))
    v = h - np.diag(np.diag(h))

    def shift(k):
        num = np.abs(v[:, k]) ** 2
        den = e0[k] - e0
        mask = (np.arange(len(e0)) != k) & (num > 0)
        return e0[k] + np.sum(num[mask] / den[mask])

    i00, i01, i10, i11 = chain.computational_indices()
    return float(shift(i11) - shift(i10) - shift(i01) + shift(i00))


# ---------------------------------------------------------------------------
# time-dependent Hamiltonians


class ChainHamiltonian:
    """Vectorised ``H(t)`` for a chain with an optional drive.

    ``H(t) = H_static + sum_k (f_k(t) e^{-i w_k t} M_k + h.c.)``.
    """

    def __init__(self, static, terms, dim):
        self.static = static
        self.terms = terms
        self.dim = dim

    def max_frequency(self):
        freqs = [abs(w) for _, w, _ in self.terms]
        spread = np.ptp(np.linalg.eigvalsh(self.static))
        return max(freqs + [spread])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        h = np.broadcast_to(self.static, (t.size, self.dim, self.dim)).copy()
        for op, w, env in self.terms:
            c = np.exp(-1j * w * t)
            if env is not None:
                c = c * env(t)
            term = c[:, None, None] * op
            h += term + np.conj(np.swapaxes(term, -1, -2))
        return h[0] if scalar else h


def build_hamiltonian(chain, drive=None, drive_node=None, omega_frame=0.0, rwa=False):
    """Time-dependent chain Hamiltonian in the lab or a rotating frame.

    The rotating frame is ``U_f = exp(i w_f t N)`` applied to every node. With
    ``rwa=True`` counter-rotating drive terms and number-nonconserving coupling
    terms are dropped; otherwise they are kept exactly.
    """
    if not np.isfinite(omega_frame):
        raise ValueError("frame frequency must be finite")
    static = chain.static_hamiltonian(omega_frame, rwa)
    terms = [(op, w, None) for op, w in chain._fast_coupling_terms(omega_frame, rwa)]
    if drive is not None:
        node = drive_node or chain.target
        if node is None:
            raise ValueError("drive needs a target node")
        a = chain.lowering(node)
        wd = drive.carrier
        # Omega e^{-i w_d t} a^dag (+ h.c.) co-rotates; Omega e^{-i w_d t} a counter-rotates
        terms.append((a.conj().T, wd - omega_frame, drive))
        if not rwa:
            terms.append((a, wd + omega_frame, drive))
    return ChainHamiltonian(static, terms, chain.dim)


def default_steps(hamiltonian, duration, minimum=512, per_radian=0.05):
    """Step count resolving the fastest frequency with ``per_radian`` rad per step."""
    fastest = hamiltonian.max_frequency()
    return int(max(minimum, np.ceil(duration * fastest / per_radian)))


class DressedDriveHamiltonian:
    """Drive in the interaction picture of the undriven chain, rotating-wave form.

    Works in the dressed eigenbasis of the exact static Hamiltonian, so static
    counter-rotating coupling effects stay in; only drive terms oscillating
    faster than ``cutoff`` are dropped.
    """

    def __init__(self, energies, drive_op, pulse, cutoff=None):
        self.pulse = pulse
        wd = pulse.carrier
        cutoff = 0.5 * abs(wd) if cutoff is None else cutoff
        gaps = energies[:, None] - energies[None, :] - wd
        keep = (np.abs(gaps) < cutoff) & (np.abs(drive_op) > 1e-14)
        self.matrix = np.where(keep, drive_op, 0.0)
        self.gaps = np.where(keep, gaps, 0.0)
        self.dim = len(energies)

    def max_frequency(self):
        return float(np.max(np.abs(self.gaps), initial=0.0))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        env = np.asarray(self.pulse(t), dtype=complex)
        term = env[:, None, None] * self.matrix * np.exp(1j * self.gaps[None] * t[:, None, None])
        h = term + np.conj(np.swapaxes(term, -1, -2))
        return h[0] if scalar else h


def computational_propagator(chain, pulse, rwa=False, n_steps=None, keep_path=False, per_radian=0.05):
    """Gate on the intruder/target computational subspace.

    The result is expressed in the interaction picture of the undriven chain
    and restricted to the dressed states 00, 01, 10, 11 (``|intruder target>``).
    With ``rwa=False`` the full Hamiltonian is propagated in a frame rotating at
    the drive carrier; with ``rwa=True`` the dressed rotating-wave Hamiltonian
    of :class:`DressedDriveHamiltonian` is used instead. Returns the 4x4 block
    (sub-unitary if population leaks) and, when ``keep_path`` is set, the block
    at every grid time.
    """
    energies, vecs = chain.dress()
    idx = chain.computational_indices()
    wf = pulse.carrier
    if rwa:
        drive_op = vecs.conj().T @ chain.lowering(chain.target).conj().T @ vecs
        h = DressedDriveHamiltonian(energies, drive_op, pulse)
    else:
        h = build_hamiltonian(chain, pulse, omega_frame=wf, rwa=False)
    if n_steps is None:
        n_steps = default_steps(h, pulse.duration, per_radian=per_radian)
    grid = TimeGrid(pulse.duration, n_steps)
    prop = propagate(h, grid, keep_path=keep_path)
    vc = vecs[:, idx]
    ec = energies[idx]
    n_tot = np.real(np.diag(chain.number_total()))

    def to_dressed(u, t):
        if rwa:
            return u[np.ix_(idx, idx)]
        u_lab = np.exp(-1j * wf * t * n_tot)[:, None] * u
        return np.exp(1j * ec * t)[:, None] * (vc.conj().T @ u_lab @ vc)

    final = to_dressed(prop.final, pulse.duration)
    if not keep_path:
        return final
    path = np.array([to_dressed(u, t) for u, t in zip(prop.path, grid.times)])
    return final, path


# ---------------------------------------------------------------------------
# spectated two-qubit block


def spectated_total_hamiltonian(delta, g):
    """4x4 two-qubit Hamiltonian with quasi-static target error and exchange ``g``."""
    h = np.diag([-delta / 2, delta / 2, -delta / 2, delta / 2]).astype(complex)
    h[1, 2] = h[2, 1] = g
    return h


# ---------------------------------------------------------------------------
# device documents


def bipartite_from_dict(doc):
    return BipartitePair(float(ghz(doc["omega_i_GHz"])), float(ghz(doc["omega_t_GHz"])), float(mhz(doc["g_MHz"])))


def chain_from_dict(doc):
    nodes = [
        Node(n["name"], float(ghz(n["frequency_GHz"])), float(mhz(n.get("anharmonicity_MHz", 0.0))), int(n.get("levels", 3)))
        for n in doc["nodes"]
    ]
    for n in nodes:
        if doc.get("kind", "chain") == "chain" and n.levels < 3 and n.alpha != 0:
            raise ValueError(f"transmon node {n.name} needs at least 3 levels")
    couplings = [Coupling(tuple(c["nodes"]), float(mhz(c["g_MHz"])), c.get("form", "charge")) for c in doc.get("couplings", [])]
    return TransmonChain(tuple(nodes), tuple(couplings), doc.get("target"), doc.get("intruder"))


def device_from_dict(doc):
    kind = doc.get("kind", "chain")
    if kind == "bipartite":
        return bipartite_from_dict(doc)
    if kind == "chain":
        return chain_from_dict(doc)
    raise ValueError(f"unknown device kind {kind!r}")


def load_device(path):
    with open(path) as fh:
        return device_from_dict(json.load(fh))


def chain_to_dict(chain):
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "chain",
        "units": "frequencies in GHz and MHz; multiplied by 2pi on load",
        "nodes": [
            {"name": n.name, "frequency_GHz": float(to_ghz(n.omega)), "anharmonicity_MHz": float(to_mhz(n.alpha)), "levels": n.levels}
            for n in chain.nodes
        ],
        "couplings": [{"nodes": list(c.nodes), "g_MHz": float(to_mhz(c.g)), "form": c.form} for c in chain.couplings],
        "target": chain.target,
        "intruder": chain.intruder,
    }


def with_coupling(chain, g):
    """Copy of ``chain`` with every coupling strength replaced by ``g``."""
    return TransmonChain(chain.nodes, tuple(Coupling(c.nodes, g, c.form) for c in chain.couplings), chain.target, chain.intruder)


# ---------------------------------------------------------------------------
# reference devices


def fig2_chain(coupler_alpha_mhz=249.0, levels=3):
    """Qubit-coupler-qubit chain used for the targeted-correction demonstrations."""
    nodes = (
        Node("q1", float(ghz(5.7735)), float(mhz(249.0)), levels),
        Node("c", float(ghz(6.99)), float(mhz(coupler_alpha_mhz)), levels),
        Node("q2", float(ghz(5.4735)), float(mhz(249.0)), levels),
    )
    g = float(mhz(151.0))
    couplings = (Coupling(("q1", "c"), g), Coupling(("c", "q2"), g))
    return TransmonChain(nodes, couplings, target="q2", intruder="q1")


def fig4_pair(g_mhz=0.0, levels=4):
    """Spectator/target transmon pair with exchange coupling."""
    nodes = (
        Node("s", float(ghz(5.0)), float(mhz(230.0)), levels),
        Node("t", float(ghz(5.5)), float(mhz(260.0)), levels),
    )
    return TransmonChain(nodes, (Coupling(("s", "t"), float(mhz(g_mhz)), "exchange"),), target="t", intruder="s")

