"""Coupling functions g(t) for a protective measurement of duration T.

Three families are supported, all supported on ``[0, T]``, symmetric about
``T/2`` and normalized to unit area:

* constant coupling ``g = 1/T``;
* sinusoidal series ``g = (1 - sum_n a_n cos(2 pi n t / T)) / T`` whose
  coefficients are the exact rational solution of the moment conditions
  ``sum a_n = 1`` and ``sum a_n n^(2k) = 0`` for ``1 <= k < N``;
* bump functions ``exp(-beta [1 - (2t/T - 1)^2]^(1 - alpha)) / c``.

Time is measured in the same units as ``T``; ``g`` carries units of 1/time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, NamedTuple, Union

import mpmath
import numpy as np
from scipy import integrate

from .exact import forward_difference_weights, solve_rational
from .exceptions import QuadratureError, UnreliableDerivativeError

__all__ = [
    "MeasurementWindow",
    "SeriesCoefficients",
    "Constant",
    "SinusoidalSeries",
    "Bump",
    "CouplingSpec",
    "EndpointDerivative",
    "solve_series_coefficients",
    "eval_coupling",
    "bump_normalization",
    "endpoint_derivative",
    "coupling_samples",
]

_EPS = np.finfo(float).eps
_BUMP_RTOL = 1e-12


@dataclass(frozen=True)
class MeasurementWindow:
    """Measurement interval ``0 <= t <= duration``."""

    duration: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.duration) and self.duration > 0):
            raise ValueError(f"duration must be positive and finite, got {self.duration!r}")


@dataclass(frozen=True)
class SeriesCoefficients:
    """Exact coefficients ``(a_1, ..., a_N)`` satisfying the moment conditions.

    Construction validates the conditions in rational arithmetic, so an
    instance is always a valid solution.
    """

    values: tuple[Fraction, ...]

    def __post_init__(self):
        vals = tuple(Fraction(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if not vals:
            raise ValueError("need at least one coefficient")
        if self.moment(0) != 1:
            raise ValueError("coefficients must sum to exactly 1")
        for k in range(1, len(vals)):
            if self.moment(k) != 0:
                raise ValueError(f"moment of order {2 * k} does not vanish")

    @property
    def order(self) -> int:
        return len(self.values)

    def moment(self, k: int) -> Fraction:
        """Exact ``sum_n a_n n^(2k)``."""
        return sum((a * n ** (2 * k) for n, a in enumerate(self.values, start=1)),
                   Fraction(0))

    @property
    def leading_moment(self) -> Fraction:
        """``sum_n a_n n^(2N)``, the first moment left nonzero."""
        return self.moment(self.order)

    def as_floats(self) -> np.ndarray:
        return np.array([float(a) for a in self.values])

    def as_strings(self) -> list[str]:
        return [str(a) for a in self.values]


def solve_series_coefficients(order: int) -> SeriesCoefficients:
    """Exact solution of the order-``N`` moment conditions.

    >>> solve_series_coefficients(3).as_strings()
    ['3/2', '-3/5', '1/10']
    """
    if isinstance(order, bool) or not isinstance(order, (int, np.integer)):
        raise TypeError(f"order must be an integer, got {type(order).__name__}")
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    n = int(order)
    # row k: sum_j a_j j^(2k) = delta_k0, a Vandermonde system in j^2
    matrix = [[j ** (2 * k) for j in range(1, n + 1)] for k in range(n)]
    rhs = [1] + [0] * (n - 1)
    return SeriesCoefficients(tuple(solve_rational(matrix, rhs)))


@dataclass(frozen=True)
class Constant:
    """Sudden turn-on and turn-off, ``g = 1/T``."""

    name = "constant"


@dataclass(frozen=True)
class SinusoidalSeries:
    coefficients: SeriesCoefficients
    name = "series"

    @property
    def order(self) -> int:
        return self.coefficients.order


@dataclass(frozen=True)
class Bump:
    """Compactly supported smooth bump.

    ``normalization`` is the area ``c`` (units of time) under the
    unnormalized profile; use :meth:`CouplingSpec.bump` to have it computed.
    """

    alpha: int
    beta: int
    normalization: float
    name = "bump"

    def __post_init__(self):
        _check_bump_params(self.alpha, self.beta)
        if not self.normalization > 0:
            raise ValueError("bump normalization must be positive")


Shape = Union[Constant, SinusoidalSeries, Bump]


def _check_bump_params(alpha, beta):
    for label, value, low in (("alpha", alpha, 2), ("beta", beta, 1)):
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            raise TypeError(f"{label} must be an integer")
        if value < low:
            raise ValueError(f"{label} must be >= {low}, got {value}")


@dataclass(frozen=True)
class CouplingSpec:
    """A coupling function: a shape on a measurement window."""

    window: MeasurementWindow
    shape: Shape = field(default_factory=Constant)

    @property
    def duration(self) -> float:
        return self.window.duration

    @classmethod
    def constant(cls, duration: float = 1.0) -> "CouplingSpec":
        return cls(MeasurementWindow(duration), Constant())

    @classmethod
    def series(cls, order: int, duration: float = 1.0) -> "CouplingSpec":
        return cls(MeasurementWindow(duration),
                   SinusoidalSeries(solve_series_coefficients(order)))

    @classmethod
    def bump(cls, alpha: int = 2, beta: int = 1, duration: float = 1.0) -> "CouplingSpec":
        window = MeasurementWindow(duration)
        c = bump_normalization(alpha, beta, window)
        return cls(window, Bump(int(alpha), int(beta), c))

    def __call__(self, t):
        return eval_coupling(self, t)

    @property
    def label(self) -> str:
        s = self.shape
        if isinstance(s, SinusoidalSeries):
            return f"series(N={s.order},T={self.duration:g})"
        if isinstance(s, Bump):
            return f"bump(alpha={s.alpha},beta={s.beta},T={self.duration:g})"
        return f"constant(T={self.duration:g})"

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"shape": self.shape.name, "T": self.duration}
        if isinstance(self.shape, SinusoidalSeries):
            out["N"] = self.shape.order
        elif isinstance(self.shape, Bump):
            out["alpha"] = self.shape.alpha
            out["beta"] = self.shape.beta
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CouplingSpec":
        """Inverse of :meth:`to_dict`. Coefficients and normalization are re-derived."""
        shape = data.get("shape")
        duration = float(data.get("T", 1.0))
        if shape == "constant":
            return cls.constant(duration)
        if shape == "series":
            return cls.series(int(data["N"]), duration)
        if shape == "bump":
            return cls.bump(int(data["alpha"]), int(data["beta"]), duration)
        raise ValueError(f"unknown coupling shape {shape!r}")


def unit_profile(spec: CouplingSpec, tau):
    """``T * g(T * tau)`` for ``tau`` in ``[0, 1]`` (dimensionless).

    Values outside ``[0, 1]`` are not masked here.
    """
    tau = np.asarray(tau, dtype=float)
    shape = spec.shape
    if isinstance(shape, Constant):
        return np.ones_like(tau)
    if isinstance(shape, SinusoidalSeries):
        return _series_profile(shape.coefficients.as_floats(), tau)
    if isinstance(shape, Bump):
        unit_area = shape.normalization / spec.duration
        return _bump_unnormalized(tau, shape.alpha, shape.beta) / unit_area
    raise TypeError(f"unsupported shape {shape!r}")


def _series_profile(coeffs, tau):
    # 1 - sum a_n cos(2 pi n tau) == 2 sum a_n sin^2(pi n tau) because the
    # coefficients sum to one; folding tau keeps both ends equally accurate
    folded = np.minimum(tau, 1.0 - tau)
    out = np.zeros_like(folded)
    for n, a in enumerate(coeffs, start=1):
        out = out + a * np.sin(np.pi * n * folded) ** 2
    return 2.0 * out


def _bump_unnormalized(tau, alpha, beta):
    tau = np.asarray(tau, dtype=float)
    # 1 - (2 tau - 1)^2 factored to keep precision near the endpoints
    u = 4.0 * tau * (1.0 - tau)
    out = np.zeros_like(u)
    inside = u > _EPS
    with np.errstate(over="ignore", under="ignore"):
        out[inside] = np.exp(-beta * u[inside] ** (1 - alpha))
    return out


def eval_coupling(spec: CouplingSpec, t):
    """Evaluate ``g(t)``; zero outside ``[0, T]``. Accepts scalars or arrays."""
    T = spec.duration
    t_arr = np.asarray(t, dtype=float)
    tau = t_arr / T
    inside = (t_arr >= 0) & (t_arr <= T)
    values = np.zeros_like(tau)
    values[inside] = unit_profile(spec, tau[inside]) / T
    if values.ndim == 0:
        return float(values)
    return values


def bump_normalization(alpha: int, beta: int,
                       window: MeasurementWindow | None = None) -> float:
    """Area under the unnormalized bump profile on ``[0, T]`` (units of time).

    Adaptive Gauss-Kronrod quadrature over the half interval, using the
    profile's symmetry. Relative error is kept at or below 1e-12.
    """
    _check_bump_params(alpha, beta)
    window = window or MeasurementWindow()

    def f(tau):
        return float(_bump_unnormalized(np.array(tau), alpha, beta))

    value, abserr = integrate.quad(f, 0.0, 0.5, epsabs=0.0, epsrel=1e-13, limit=500)
    value *= 2.0
    abserr *= 2.0
    if not value > 0 or abserr > _BUMP_RTOL * value:
        raise QuadratureError(
            f"bump normalization for alpha={alpha}, beta={beta} did not reach "
            f"relative error {_BUMP_RTOL:g} (estimate {abserr / max(value, 1e-300):.2e})")
    return value * window.duration


class EndpointDerivative(NamedTuple):
    left: float
    right: float
    error: float


def endpoint_derivative(spec: CouplingSpec, order: int,
                        method: str = "auto") -> EndpointDerivative:
    """One-sided ``order``-th derivatives of ``g`` at ``t = 0+`` and ``t = T-``.

    ``method`` is ``"analytic"`` (constant and series shapes only),
    ``"finite_difference"`` or ``"auto"`` (analytic where available).
    The finite-difference branch uses sixth-order one-sided stencils with
    two step halvings and a Richardson correction, sampling ``g`` in
    40-digit arithmetic so that high orders are not round-off limited;
    ``error`` is the Richardson estimate plus a round-off bound. Analytic
    results report ``error = 0``.
    """
    if isinstance(order, bool) or not isinstance(order, (int, np.integer)) or order < 0:
        raise ValueError(f"derivative order must be a nonnegative integer, got {order!r}")
    if method not in ("auto", "analytic", "finite_difference"):
        raise ValueError(f"unknown method {method!r}")
    analytic_ok = isinstance(spec.shape, (Constant, SinusoidalSeries))
    if method == "analytic" and not analytic_ok:
        raise ValueError("analytic endpoint derivatives need a constant or series shape")
    if method == "finite_difference" or not analytic_ok:
        return _fd_endpoint_derivative(spec, int(order))
    return _analytic_endpoint_derivative(spec, int(order))


def _analytic_endpoint_derivative(spec: CouplingSpec, j: int) -> EndpointDerivative:
    T = spec.duration
    shape = spec.shape
    if isinstance(shape, Constant):
        value = 1.0 / T if j == 0 else 0.0
        return EndpointDerivative(value, value, 0.0)
    coeffs = shape.coefficients
    if j == 0:
        value = float(1 - coeffs.moment(0)) / T
    elif j % 2:
        value = 0.0
    else:
        # d^j/dt^j cos(w t) at t = 0 is (-1)^(j/2) w^j; the same holds at t = T
        moment = coeffs.moment(j // 2)
        sign = -1 if (j // 2) % 2 == 0 else 1
        value = 0.0 if moment == 0 else sign * float(moment) * (2 * np.pi / T) ** j / T
    return EndpointDerivative(value, value, 0.0)


_FD_ACCURACY = 6
_FD_DIGITS = 40


def _mp_unit_profile(spec: CouplingSpec, tau):
    """``T * g(T * tau)`` in mpmath arithmetic, for ``tau`` in ``[0, 1]``."""
    shape = spec.shape
    if isinstance(shape, Constant):
        return mpmath.mpf(1)
    folded = min(tau, 1 - tau)
    if isinstance(shape, SinusoidalSeries):
        return 2 * mpmath.fsum(mpmath.mpf(a.numerator) / a.denominator
                               * mpmath.sin(mpmath.pi * n * folded) ** 2
                               for n, a in enumerate(shape.coefficients.values, start=1))
    u = 4 * folded * (1 - folded)
    if u <= 0:
        return mpmath.mpf(0)
    unit_area = mpmath.mpf(shape.normalization) / spec.duration
    return mpmath.exp(-shape.beta * u ** (1 - shape.alpha)) / unit_area


def _fd_base_step(spec: CouplingSpec, nodes: int) -> float:
    # fraction of T spanned by the coarsest stencil
    shape = spec.shape
    span = 0.05 / shape.order if isinstance(shape, SinusoidalSeries) else 0.05
    return span / (nodes - 1)


def _fd_endpoint_derivative(spec: CouplingSpec, j: int) -> EndpointDerivative:
    weights = forward_difference_weights(j, _FD_ACCURACY)
    nodes = len(weights)
    T = spec.duration
    with mpmath.workdps(_FD_DIGITS):
        w = [mpmath.mpf(f.numerator) / f.denominator for f in weights]
        wsum = mpmath.fsum(abs(x) for x in w)
        unit_eps = mpmath.mpf(10) ** (-_FD_DIGITS + 2)
        h0 = mpmath.mpf(_fd_base_step(spec, nodes))

        def estimate(side):
            # work in tau = t / T, rescale by T^-(j + 1) at the end
            vals, roundoff = [], []
            for h in (h0, h0 / 2, h0 / 4):
                taus = [i * h if side == "left" else 1 - i * h for i in range(nodes)]
                samples = [_mp_unit_profile(spec, tau) for tau in taus]
                # mirrored stencil flips the sign of odd derivatives
                sign = 1 if side == "left" or j % 2 == 0 else -1
                vals.append(sign * mpmath.fsum(a * b for a, b in zip(w, samples)) / h ** j)
                scale = max(max(abs(v) for v in samples), mpmath.mpf(1))
                roundoff.append(unit_eps * wsum * scale / h ** j)
            d1, d2, d3 = vals
            e1, e2 = abs(d1 - d2), abs(d2 - d3)
            noise = roundoff[1] + roundoff[2]
            if e2 > e1 and e2 > 2 * noise:
                raise UnreliableDerivativeError(
                    f"step halving diverged for derivative order {j} at {side} endpoint "
                    f"({float(e1):.3e} -> {float(e2):.3e})")
            gain = 2 ** _FD_ACCURACY - 1
            value = d3 + (d3 - d2) / gain
            error = e2 / gain + abs(value - d3) + 2 * roundoff[2]
            factor = mpmath.mpf(T) ** -(j + 1)
            return float(value * factor), float(error * factor)

        left, err_l = estimate("left")
        right, err_r = estimate("right")
    return EndpointDerivative(left, right, max(err_l, err_r))


def coupling_samples(spec: CouplingSpec, count: int) -> np.ndarray:
    """``count`` rows of ``(t, g(t))`` on a uniform grid over ``[0, T]``."""
    if count < 2:
        raise ValueError("need at least two samples")
    T = spec.duration
    t = np.linspace(0.0, T, int(count))
    half = count // 2
    # mirror so that sample i and count-1-i straddle T/2 exactly; g(t) = g(T - t)
    t[count - half:] = T - t[:half][::-1]
    g = eval_coupling(spec, t)
    g[count - half:] = g[:half][::-1]
    return np.column_stack([t, g])
