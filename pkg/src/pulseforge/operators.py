"""Dense operators, time-ordered propagation and gate fidelities.

Time is measured in ns and every frequency is an angular frequency in rad/ns.
Values quoted as "MHz x 2pi" or "GHz x 2pi" are converted with :func:`mhz` and
:func:`ghz`.
"""

from dataclasses import dataclass, field
from functools import reduce
import itertools

import numpy as np
from scipy.optimize import minimize

from ._validation import (
    ContractError,
    PropagationError,
    check_hermitian,
    check_positive,
    check_square,
)

TWO_PI = 2.0 * np.pi

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
# |0> is the +1 eigenstate of SZ; SP raises |0> -> |1>.
SP = np.array([[0, 0], [1, 0]], dtype=complex)
SM = SP.T.copy()
PAULIS = (SX, SY, SZ)


def mhz(value):
    """Convert a frequency in MHz (times 2pi) to rad/ns."""
    return TWO_PI * np.asarray(value, dtype=float) * 1e-3


def ghz(value):
    """Convert a frequency in GHz (times 2pi) to rad/ns."""
    return TWO_PI * np.asarray(value, dtype=float)


def to_mhz(omega):
    return np.asarray(omega, dtype=float) / TWO_PI * 1e3


def to_ghz(omega):
    return np.asarray(omega, dtype=float) / TWO_PI


def destroy(levels):
    """Truncated annihilation operator with ``levels`` Fock states."""
    return np.diag(np.sqrt(np.arange(1, levels, dtype=float)), 1).astype(complex)


def kron(*ops):
    return reduce(np.kron, ops)


def embed(op, index, dims):
    """Place ``op`` on tensor factor ``index`` of a product space."""
    factors = [np.eye(d, dtype=complex) for d in dims]
    factors[index] = np.asarray(op, dtype=complex)
    return kron(*factors)


def pauli_vector(op):
    """Real coefficients n with ``op = n0 I + n . sigma`` for a 2x2 operator."""
    op = np.asarray(op, dtype=complex)
    return np.array([np.trace(p @ op).real / 2 for p in PAULIS])


def rx(theta):
    return np.cos(theta / 2) * I2 - 1j * np.sin(theta / 2) * SX


def expm_hermitian(h, dt):
    """Return ``exp(-i H dt)`` for a hermitian ``H`` via eigendecomposition."""
    h = check_hermitian(h)
    dt = float(dt)
    if not np.isfinite(dt):
        raise ContractError("dt must be finite")
    w, v = np.linalg.eigh(0.5 * (h + h.conj().T))
    return (v * np.exp(-1j * w * dt)) @ v.conj().T


def _batched_step_exponentials(hs, dt):
    hs = 0.5 * (hs + np.conj(np.swapaxes(hs, -1, -2)))
    w, v = np.linalg.eigh(hs)
    return (v * np.exp(-1j * w * dt)[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of ``n_steps`` intervals on ``[t0, t0 + duration]``."""

    duration: float
    n_steps: int = 4096
    t0: float = 0.0

    def __post_init__(self):
        check_positive(self.duration, "duration")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ValueError("n_steps must be an integer >= 2")

    @property
    def dt(self):
        return self.duration / self.n_steps

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    @property
    def midpoints(self):
        return self.t0 + self.dt * (np.arange(self.n_steps) + 0.5)


@dataclass(frozen=True)
class Propagation:
    """Result of :func:`propagate`.

    ``path`` holds ``U(t_k)`` for every grid time (including ``U(t0) = I``) when
    the trajectory was kept, otherwise ``None``.
    """

    grid: TimeGrid
    final: np.ndarray
    path: np.ndarray = field(default=None, repr=False)

    @property
    def times(self):
        return self.grid.times


def sample_hamiltonian(h_of_t, times):
    """Evaluate ``h_of_t`` on an array of times, returning shape (n, d, d).

    Callables that accept an array of times and return a stack are used
    directly; anything else is evaluated point by point.
    """
    times = np.asarray(times, dtype=float)
    try:
        hs = np.asarray(h_of_t(times), dtype=complex)
        if hs.ndim == 3 and hs.shape[0] == times.size:
            return hs
    except (TypeError, ValueError):
        pass
    return np.stack([np.asarray(h_of_t(float(t)), dtype=complex) for t in times])


def propagate(h_of_t, grid, keep_path=False, chunk=2048):
    """Time-ordered propagator of ``H(t)`` over ``grid``.

    Each step uses the exact exponential of ``H`` sampled at the interval
    midpoint, so the result is unitary to rounding and second-order accurate
    in ``dt``.
    """
    mids = grid.midpoints
    dt = grid.dt
    u = None
    path = [] if keep_path else None
    for start in range(0, grid.n_steps, chunk):
        hs = sample_hamiltonian(h_of_t, mids[start : start + chunk])
        bad = ~np.isfinite(hs).all(axis=(1, 2))
        if bad.any():
            t_bad = mids[start + int(np.argmax(bad))]
            raise PropagationError(f"non-finite Hamiltonian at t = {t_bad:.6g} ns")
        steps = _batched_step_exponentials(hs, dt)
        if u is None:
            u = np.eye(hs.shape[-1], dtype=complex)
            if keep_path:
                path.append(u)
        for step in steps:
            u = step @ u
            if keep_path:
                path.append(u)
    return Propagation(grid=grid, final=u, path=np.array(path) if keep_path else None)


def _restrict(u, subspace):
    u = check_square(u, "U")
    if subspace is None:
        return u
    idx = np.asarray(subspace, dtype=int)
    if idx.size == 0:
        raise ValueError("subspace must not be empty")
    if idx.min() < 0 or idx.max() >= u.shape[0] or len(set(idx.tolist())) != idx.size:
        raise ValueError(f"invalid subspace indices {idx.tolist()}")
    return u[np.ix_(idx, idx)]


def _local_phase_overlap(diag, n_qubits):
    bits = np.array(list(itertools.product((0, 1), repeat=n_qubits)), dtype=float)

    def neg(theta):
        return -abs(np.sum(diag * np.exp(1j * bits @ theta)))

    best = None
    for start in itertools.product(np.linspace(0, TWO_PI, 4, endpoint=False), repeat=n_qubits):
        res = minimize(neg, np.array(start), method="BFGS")
        if best is None or res.fun < best:
            best = res.fun
    return -best


def trace_fidelity(u, target, subspace=None, phase_blocks=None, local_phases=None):
    """Gate fidelity ``|Tr(P V^dag U P)| / d`` on a computational subspace.

    Parameters
    ----------
    u : array (D, D)
        Realised propagator on the full space.
    target : array (d, d)
        Ideal gate on the subspace.
    subspace : sequence of int, optional
        Row indices of the subspace inside ``u``; defaults to the whole space.
    phase_blocks : sequence of sequences of int, optional
        Groups of subspace positions that each receive their own free global
        phase before the modulus is taken.
    local_phases : int, optional
        Number of qubits; maximise over independent single-qubit Z phases
        applied after the gate (subspace dimension must be ``2**local_phases``).
    """
    target = check_square(target, "target")
    m = _restrict(u, subspace)
    d = target.shape[0]
    if d < 2:
        raise ValueError("subspace dimension must be at least 2")
    if m.shape != target.shape:
        raise ValueError(f"shape mismatch: {m.shape} vs target {target.shape}")
    overlap = target.conj().T @ m
    diag = np.diag(overlap)
    if local_phases:
        if 2**local_phases != d:
            raise ValueError("local_phases requires a 2**n dimensional subspace")
        value = _local_phase_overlap_rows(target, m, local_phases)
    elif phase_blocks:
        value = sum(abs(np.sum(diag[list(block)])) for block in phase_blocks)
    else:
        value = abs(np.sum(diag))
    f = value / d
    if not np.isfinite(f):
        return float("nan")
    # an exact match can land a few ulp below 1 through rounding in V^dag U
    if f > 1.0 - 16 * np.finfo(float).eps * d:
        f = 1.0
    return float(max(0.0, f))


def _local_phase_overlap_rows(target, m, n_qubits):
    # Tr(V^dag D U) with D diagonal = sum_k D_kk (U V^dag)_kk
    weights = np.einsum("kj,kj->k", m, target.conj())
    return _local_phase_overlap(weights, n_qubits)


def su2_propagate(hx, hy, hz, dt, keep_path=False):
    """Product of ``exp(-i dt (hx X + hy Y + hz Z))`` steps for 2x2 generators.

    Same midpoint integrator as :func:`propagate`, specialised to closed-form
    SU(2) step exponentials.
    """
    hx, hy, hz = (np.broadcast_to(np.asarray(a, dtype=float), np.shape(hx)) for a in (hx, hy, hz))
    norm = np.sqrt(hx**2 + hy**2 + hz**2)
    safe = np.where(norm > 0, norm, 1.0)
    c = np.cos(norm * dt)
    s = np.sin(norm * dt) / safe
    steps = np.empty((norm.size, 2, 2), dtype=complex)
    steps[:, 0, 0] = c - 1j * s * hz
    steps[:, 1, 1] = c + 1j * s * hz
    steps[:, 0, 1] = -1j * s * (hx - 1j * hy)
    steps[:, 1, 0] = -1j * s * (hx + 1j * hy)
    if keep_path:
        path = [np.eye(2, dtype=complex)]
        for step in steps:
            path.append(step @ path[-1])
        return path[-1], np.array(path)
    return ordered_product(steps)


def ordered_product(steps):
    """``steps[-1] @ ... @ steps[0]`` by pairwise reduction."""
    steps = np.asarray(steps)
    if steps.shape[0] == 0:
        return np.eye(steps.shape[-1], dtype=complex)
    while steps.shape[0] > 1:
        if steps.shape[0] % 2:
            tail = steps[-1:]
            steps = np.concatenate([steps[1:-1:2] @ steps[:-1:2], tail])
        else:
            steps = steps[1::2] @ steps[::2]
    return steps[0]
