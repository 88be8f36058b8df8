"""Input validation helpers shared across the package."""

import numpy as np

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-9


class ContractError(ValueError):
    """An operator or argument violates a documented precondition."""


class PropagationError(RuntimeError):
    """Raised when the Hamiltonian produces non-finite samples."""


class CapacityError(ValueError):
    """Hilbert space exceeds the supported dimension."""


class SynthesisError(RuntimeError):
    """A pulse synthesis problem could not be solved.

    The best residual found is kept on the exception so callers can report it.
    """

    def __init__(self, message, best_residual=None, best=None):
        super().__init__(message)
        self.best_residual = best_residual
        self.best = best


class RegimeError(ValueError):
    """Input lies outside the regime where an operation is defined."""


class DegeneracyError(ValueError):
    """Geometric degeneracy (zero speed, vanishing curvature)."""


def check_square(a, name="operator"):
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError(f"{name} must be a square matrix, got shape {a.shape}")
    return a


def check_hermitian(h, name="H", tol=HERMITIAN_TOL):
    h = check_square(h, name)
    scale = max(1.0, float(np.max(np.abs(h)))) if h.size else 1.0
    if np.max(np.abs(h - h.conj().T), initial=0.0) > tol * scale:
        raise ContractError(f"{name} is not hermitian")
    return h


def check_unitary(u, name="U", tol=UNITARY_TOL):
    u = check_square(u, name)
    defect = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
    if defect > tol:
        raise ContractError(f"{name} is not unitary (defect {defect:.2e})")
    return u


def check_positive(value, name):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be positive and finite, got {value}")
    return value
