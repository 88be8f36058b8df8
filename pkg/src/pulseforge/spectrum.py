"""Absorption doublet of a split transition and its single-peak linewidth fit.

Widths are full widths at half maximum: a Lorentzian of width ``gamma`` is
``1 / (1 + (2 x / gamma)^2)``.
"""

from dataclasses import dataclass
import warnings

import numpy as np
from scipy.optimize import OptimizeWarning, brentq, curve_fit
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import RegimeError, check_positive

LN2 = np.log(2.0)


def lorentzian(x, center, width):
    return 1.0 / (1.0 + (2.0 * (x - center) / width) ** 2)


def gaussian(x, center, width):
    return np.exp(-4.0 * LN2 * ((x - center) / width) ** 2)


def pseudo_voigt(x, amplitude, center, width, eta):
    """``amplitude * (eta L + (1 - eta) G)`` with a shared center and width."""
    return amplitude * (eta * lorentzian(x, center, width) + (1.0 - eta) * gaussian(x, center, width))


@dataclass(frozen=True)
class AbsorptionProfile:
    axis: np.ndarray
    values: np.ndarray
    delta: float
    gamma: float

    @property
    def n_peaks(self):
        v = self.values
        inner = (v[1:-1] > v[:-2]) & (v[1:-1] >= v[2:])
        return int(np.count_nonzero(inner))


def default_axis(gamma, delta=0.0, half_span=15.0, n=6001):
    span = half_span * gamma + abs(delta)
    return np.linspace(-span, span, n)


def absorption_doublet(delta, gamma, axis=None):
    """Two equal-weight Lorentzians at ``-delta/2`` and ``+delta/2``.

    Each component has weight one half, so ``delta = 0`` returns a single
    unit-peak Lorentzian and the area does not depend on ``delta``.
    """
    gamma = check_positive(gamma, "gamma")
    axis = default_axis(gamma, delta) if axis is None else np.asarray(axis, dtype=float)
    values = 0.5 * (lorentzian(axis, -delta / 2, gamma) + lorentzian(axis, delta / 2, gamma))
    return AbsorptionProfile(axis, values, float(delta), gamma)


def center_curvature(delta, gamma):
    """Second derivative of the doublet at its midpoint (closed form)."""
    # d^2/dx^2 of 1/(1+u^2), u = 2(x - c)/w, is (8/w^2)(3u^2 - 1)/(1+u^2)^3
    u = delta / gamma
    return (8.0 / gamma**2) * (3 * u**2 - 1) / (1 + u**2) ** 3


def merge_threshold(gamma, xtol=1e-14):
    """Smallest splitting at which the doublet shows a dip at its midpoint.

    Found by bisection on the sign of the midpoint curvature.
    """
    gamma = check_positive(gamma, "gamma")
    return float(brentq(center_curvature, 1e-6 * gamma, 10 * gamma, args=(gamma,), xtol=xtol * gamma))


@dataclass(frozen=True)
class LinewidthFit:
    gamma: float
    eta: float
    center: float
    amplitude: float
    rms: float
    converged: bool


def fit_linewidth(profile):
    """Pseudo-Voigt fit of a merged (single-peaked) profile.

    Returns
    -------
    LinewidthFit
        ``gamma`` is the fitted full width at half maximum.

    Raises
    ------
    RegimeError
        If the profile has more than one maximum.
    """
    if profile.n_peaks > 1:
        raise RegimeError("profile is split into separate peaks; a single-line width is undefined")
    x, y = profile.axis, profile.values
    i = int(np.argmax(y))
    p0 = [y[i], x[i], profile.gamma, 0.5]
    lo = [0.0, x[0], 1e-6 * profile.gamma, 0.0]
    hi = [np.inf, x[-1], 100 * profile.gamma, 1.0]
    converged = True
    with warnings.catch_warnings():
        warnings.simplefilter("error", OptimizeWarning)
        try:
            popt, _ = curve_fit(pseudo_voigt, x, y, p0=p0, bounds=(lo, hi), maxfev=20000,
                                   xtol=1e-14, ftol=1e-14, gtol=1e-14)
        except (RuntimeError, OptimizeWarning):
            converged = False
            popt = np.array(p0, dtype=float)
    rms = float(np.sqrt(np.mean((pseudo_voigt(x, *popt) - y) ** 2)))
    return LinewidthFit(float(popt[2]), float(popt[3]), float(popt[1]), float(popt[0]), rms, converged)


class LineshapeFitter(BaseEstimator, RegressorMixin):
    """Pseudo-Voigt regressor: ``fit(axis, values)`` then ``predict(axis)``."""

    def __init__(self, gamma_guess=1.0):
        self.gamma_guess = gamma_guess

    def fit(self, X, y):
        x = np.asarray(X, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        if x.shape != y.shape or x.size < 5:
            raise ValueError("need matching axis and values with at least 5 points")
        order = np.argsort(x)
        res = fit_linewidth(AbsorptionProfile(x[order], y[order], float("nan"), float(self.gamma_guess)))
        self.fit_ = res
        self.gamma_, self.eta_, self.center_, self.amplitude_ = res.gamma, res.eta, res.center, res.amplitude
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        return pseudo_voigt(np.asarray(X, dtype=float).ravel(), self.amplitude_, self.center_, self.gamma_, self.eta_)


def absorption_surface(detuning, deltas, gamma):
    """Rows of doublet profiles over a detuning grid, one per splitting."""
    return np.array([absorption_doublet(d, gamma, detuning).values for d in deltas])
