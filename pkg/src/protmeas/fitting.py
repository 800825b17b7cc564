"""Decay-law estimators for spectral envelopes.

Both estimators follow the scikit-learn regressor protocol: ``X`` holds
``omega T`` values (shape ``(n,)`` or ``(n, 1)``), ``y`` the envelope
magnitudes. Fits are unweighted least squares in the log domain, which
weights every decade of magnitude equally.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .spectral import Envelope

__all__ = [
    "DecayFit",
    "PowerLawDecay",
    "SubexponentialDecay",
    "fit_power_law",
    "fit_subexponential",
    "asymptotic_bump_envelope",
]


@dataclass
class DecayFit:
    """Fitted decay law.

    ``model`` is ``"power"`` (``prefactor * x**exponent``) or ``"subexp"``
    (``prefactor * x**-prefactor_exponent * exp(-rate * x**stretch)``).
    ``residual`` is the root-mean-square misfit of the natural log.
    """

    model: str
    residual: float
    fit_range: tuple[float, float]
    prefactor: float
    exponent: float | None = None
    stretch: float | None = None
    rate: float | None = None
    prefactor_exponent: float | None = None
    extrapolated: bool = False

    def __post_init__(self):
        if self.model not in ("power", "subexp"):
            raise ValueError(f"unknown decay model {self.model!r}")
        if self.residual < 0:
            raise ValueError("residual must be nonnegative")
        lo, hi = self.fit_range
        if not lo < hi:
            raise ValueError("fit_range must be nonempty")

    def to_dict(self) -> dict:
        out = {"model": self.model}
        if self.model == "power":
            out["exponent"] = self.exponent
        else:
            out.update(stretch=self.stretch, rate=self.rate,
                       prefactor_exponent=self.prefactor_exponent)
        out.update(prefactor=self.prefactor, residual=self.residual,
                   range=list(self.fit_range), extrapolated=self.extrapolated)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "DecayFit":
        known = {k: data[k] for k in asdict(cls("power", 0.0, (0, 1), 1.0)) if k in data}
        known["fit_range"] = tuple(data["range"])
        known["model"] = data["model"]
        return cls(**known)

    def evaluate(self, omega_t):
        x = np.asarray(omega_t, dtype=float)
        if self.model == "power":
            return self.prefactor * x ** self.exponent
        return asymptotic_bump_envelope(None, None, self.rate, self.prefactor, x,
                                        stretch=self.stretch,
                                        prefactor_exponent=self.prefactor_exponent)


def _validated(X, y, fit_range, min_points):
    X, y = check_X_y(np.asarray(X, dtype=float).reshape(-1, 1), y, y_numeric=True)
    x = X[:, 0]
    if fit_range is not None:
        lo, hi = fit_range
        keep = (x >= lo) & (x <= hi)
        x, y = x[keep], y[keep]
    if x.size < min_points:
        raise ValueError(f"need at least {min_points} points in the fit range, got {x.size}")
    if np.any(x <= 0):
        raise ValueError("omega_t values must be positive")
    if np.any(y <= 0):
        raise ValueError("magnitudes must be positive for a log-domain fit")
    return x, y


def _lstsq_line(u, v):
    A = np.column_stack([u, np.ones_like(u)])
    (slope, intercept), *_ = np.linalg.lstsq(A, v, rcond=None)
    rms = float(np.sqrt(np.mean((A @ [slope, intercept] - v) ** 2)))
    return float(slope), float(intercept), rms


class _LogDomainScore:
    def score(self, X, y, sample_weight=None):
        """Coefficient of determination of ``log y``."""
        from sklearn.metrics import r2_score
        return r2_score(np.log(y), np.log(self.predict(X)), sample_weight=sample_weight)


class PowerLawDecay(_LogDomainScore, RegressorMixin, BaseEstimator):
    """Fit ``y = prefactor * x**exponent`` by a straight line in log-log space.

    Parameters
    ----------
    fit_range : (float, float) or None
        Only points with ``lo <= x <= hi`` are used.
    min_points : int
        Minimum number of points inside the range.

    Attributes
    ----------
    exponent_, prefactor_, residual_, n_points_
    """

    def __init__(self, fit_range=None, min_points=10):
        self.fit_range = fit_range
        self.min_points = min_points

    def fit(self, X, y):
        x, y = _validated(X, y, self.fit_range, self.min_points)
        slope, intercept, rms = _lstsq_line(np.log(x), np.log(y))
        self.exponent_ = slope
        self.prefactor_ = float(np.exp(intercept))
        self.residual_ = rms
        self.n_points_ = x.size
        self.range_ = (float(x.min()), float(x.max())) if self.fit_range is None \
            else tuple(map(float, self.fit_range))
        return self

    def predict(self, X):
        check_is_fitted(self, "exponent_")
        x = check_array(np.asarray(X, dtype=float).reshape(-1, 1))[:, 0]
        return self.prefactor_ * x ** self.exponent_

    def to_decay_fit(self) -> DecayFit:
        check_is_fitted(self, "exponent_")
        return DecayFit("power", self.residual_, self.range_, self.prefactor_,
                        exponent=self.exponent_)


class SubexponentialDecay(_LogDomainScore, RegressorMixin, BaseEstimator):
    """Fit ``y = prefactor * x**-p * exp(-rate * x**s)`` with ``s`` and ``p`` fixed.

    ``s = (alpha - 1) / alpha`` and ``p = (alpha + 1) / (2 alpha)``; the fit is
    a straight line of ``log y + p log x`` against ``x**s`` whose negated
    slope is the rate.
    """

    def __init__(self, alpha=2, fit_range=None, min_points=10):
        self.alpha = alpha
        self.fit_range = fit_range
        self.min_points = min_points

    @property
    def stretch(self) -> float:
        return (self.alpha - 1) / self.alpha

    @property
    def prefactor_exponent(self) -> float:
        return (self.alpha + 1) / (2 * self.alpha)

    def fit(self, X, y):
        if self.alpha < 2:
            raise ValueError("alpha must be >= 2")
        x, y = _validated(X, y, self.fit_range, self.min_points)
        slope, intercept, rms = _lstsq_line(
            x ** self.stretch, np.log(y) + self.prefactor_exponent * np.log(x))
        self.rate_ = -slope
        self.prefactor_ = float(np.exp(intercept))
        self.residual_ = rms
        self.n_points_ = x.size
        self.range_ = (float(x.min()), float(x.max())) if self.fit_range is None \
            else tuple(map(float, self.fit_range))
        return self

    def predict(self, X):
        check_is_fitted(self, "rate_")
        x = check_array(np.asarray(X, dtype=float).reshape(-1, 1))[:, 0]
        return asymptotic_bump_envelope(self.alpha, None, self.rate_, self.prefactor_, x)

    def to_decay_fit(self) -> DecayFit:
        check_is_fitted(self, "rate_")
        return DecayFit("subexp", self.residual_, self.range_, self.prefactor_,
                        stretch=self.stretch, rate=self.rate_,
                        prefactor_exponent=self.prefactor_exponent)


def fit_power_law(envelope: Envelope, fit_range, *, min_points: int = 10) -> DecayFit:
    est = PowerLawDecay(fit_range=fit_range, min_points=min_points).fit(envelope.omega_t, envelope.magnitude)
    return est.to_decay_fit()


def fit_subexponential(envelope: Envelope, alpha: int, fit_range, *,
                       min_points: int = 10) -> DecayFit:
    est = SubexponentialDecay(alpha=alpha, fit_range=fit_range, min_points=min_points)
    return est.fit(envelope.omega_t, envelope.magnitude).to_decay_fit()


def asymptotic_bump_envelope(alpha, beta, rate, prefactor, omega_t, *,
                             stretch=None, prefactor_exponent=None):
    """``prefactor * x^-((alpha+1)/(2 alpha)) * exp(-rate * x^((alpha-1)/alpha))``.

    ``beta`` identifies the bump the calibration belongs to and does not
    enter the formula. Values produced here are extrapolations and must be
    labeled as such wherever they are reported.
    """
    x = np.asarray(omega_t, dtype=float)
    s = (alpha - 1) / alpha if stretch is None else stretch
    p = (alpha + 1) / (2 * alpha) if prefactor_exponent is None else prefactor_exponent
    out = prefactor * x ** (-p) * np.exp(-rate * x ** s)
    return float(out) if out.ndim == 0 else out
