"""Fourier transforms G(omega T) of coupling functions and their envelopes.

``G(x) = int_0^T exp(i omega t) g(t) dt`` depends on ``omega`` and ``T`` only
through ``x = omega T``. Constant and sinusoidal-series couplings have a
closed form; every shape can be integrated numerically with Gauss-Legendre
panels. Bump transforms cancel down to roughly ``exp(-gamma x^s)``, so
quadrature is only trusted inside a per-shape validity window.
"""

from __future__ import annotations

import csv
import functools
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import mpmath
import numpy as np
from scipy import optimize

from .coupling import (Bump, Constant, CouplingSpec, SeriesCoefficients,
                       SinusoidalSeries, unit_profile)
from .exceptions import (CancellationLimitError, ConvergenceRadiusError,
                         QuadratureError, UndersampledError)

__all__ = [
    "SpectralCurve",
    "Envelope",
    "Crossover",
    "analytic_spectrum",
    "smooth_envelope",
    "truncated_power_series",
    "quadrature_spectrum",
    "saddle_point_rate",
    "bump_certified_limit",
    "oscillation_grid",
    "spectrum_curve",
    "envelope_extract",
    "window_max",
    "window_envelope",
    "calibrate_bump",
    "find_crossover",
]

RESONANCE_GUARD = 1e-6
QUADRATURE_ATOL = 1e-13
ENVELOPE_WINDOW = 2 * np.pi
MIN_POINTS_PER_WINDOW = 8
# predicted |G| at which bump quadrature stops being certified: 5e4 times
# the 1e-13 double-precision noise floor
CERTIFIED_FLOOR = 5e-9

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)


def _coefficient_tuple(coefficients) -> tuple[Fraction, ...]:
    """Normalize the accepted coefficient inputs to a tuple of fractions.

    ``None``, :class:`Constant` and a constant :class:`CouplingSpec` give the
    empty tuple. Arbitrary number sequences are accepted so that the
    closed form can be evaluated for coefficients that are not solutions.
    """
    if coefficients is None or isinstance(coefficients, Constant):
        return ()
    if isinstance(coefficients, CouplingSpec):
        shape = coefficients.shape
        if isinstance(shape, Constant):
            return ()
        if isinstance(shape, SinusoidalSeries):
            return shape.coefficients.values
        raise TypeError("bump couplings have no closed-form transform")
    if isinstance(coefficients, SinusoidalSeries):
        return coefficients.coefficients.values
    if isinstance(coefficients, SeriesCoefficients):
        return coefficients.values
    return tuple(Fraction(c) if isinstance(c, (int, Fraction)) else Fraction(float(c))
                 for c in coefficients)


def _moment(a: Sequence[Fraction], k: int) -> Fraction:
    return sum((c * n ** (2 * k) for n, c in enumerate(a, start=1)), Fraction(0))


@functools.lru_cache(maxsize=None)
def _two_pi_split(n: int) -> tuple[float, float]:
    """``2 pi n`` as an unevaluated sum ``hi + lo`` of doubles."""
    with mpmath.workdps(40):
        exact = 2 * mpmath.pi * n
        hi = float(exact)
        return hi, float(exact - hi)


def _sin_over_detuning(x, n):
    """``sin(x/2) / (1 - (2 pi n / x)^2)``, continued through the resonance.

    With ``d = x - 2 pi n`` this is ``(-1)^n x^2 / (x + 2 pi n) * sin(d/2) / d``.
    ``d`` is formed from a two-part ``2 pi n`` so no precision is lost next
    to the resonance; inside the guard ``sin(d/2)/d`` takes its limit form.
    """
    hi, lo = _two_pi_split(n)
    d = (x - hi) - lo
    near = np.abs(d) < RESONANCE_GUARD
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(near, 0.5 * np.sinc(d / (2 * np.pi)), np.sin(0.5 * d) / d)
    return (-1) ** n * x ** 2 / (x + hi) * ratio


def _bracket_times_sin(a: Sequence[Fraction], x, *, with_sin=True):
    """``sin(x/2) * [1 - sum a_n / (1 - (2 pi n/x)^2)]`` for ``x > 0``.

    Above the last resonance the bracket is rewritten exactly as
    ``(1 - m_0) - sum_{k<K} m_k (2 pi/x)^(2k) - sum_n a_n u_n^K / (1 - u_n)``
    with ``u_n = (2 pi n/x)^2`` and exact moments ``m_k``. For solutions
    of the moment conditions the polynomial part vanishes identically and
    no cancellation is left, which keeps ``|G|`` accurate far below 1e-16.
    """
    x = np.asarray(x, dtype=float)
    K = len(a)
    s = np.sin(x / 2) if with_sin else np.ones_like(x)
    if K == 0:
        return s
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _bracket_terms(a, x, s, with_sin)


def _bracket_terms(a, x, s, with_sin):
    K = len(a)
    direct = x <= 2 * np.pi * K
    poly = np.full_like(x, float(1 - _moment(a, 0)))
    for k in range(1, K):
        m = _moment(a, k)
        if m:
            poly = poly - float(m) * (2 * np.pi / x) ** (2 * k)
    total = np.where(direct, s, s * poly)
    for n, c in enumerate(a, start=1):
        if c == 0:
            continue
        u = (2 * np.pi * n / x) ** 2
        ratio = _sin_over_detuning(x, n) if with_sin else 1.0 / (1.0 - u)
        weight = np.where(direct, 1.0, u ** K)
        total = total - float(c) * weight * ratio
    return total


def analytic_spectrum(coefficients, omega_t):
    """Closed-form ``G(omega T)`` for constant or sinusoidal-series coupling.

    ``coefficients`` is ``None``/:class:`Constant` for constant coupling, a
    :class:`SeriesCoefficients`, a series :class:`CouplingSpec`, or a plain
    sequence of coefficients. Negative ``omega_t`` returns the complex
    conjugate; ``omega_t = 0`` returns the limit ``1``.
    """
    a = _coefficient_tuple(coefficients)
    x = np.asarray(omega_t, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    ax = np.abs(x)
    out = np.ones(x.shape, dtype=complex)
    pos = ax > 0
    xp = ax[pos]
    out[pos] = 2 * np.exp(0.5j * xp) / xp * _bracket_times_sin(a, xp)
    out = np.where(x < 0, np.conj(out), out)
    return complex(out[0]) if scalar else out


def smooth_envelope(coefficients, omega_t):
    """``|G|`` with the ``sin(omega T / 2)`` oscillation replaced by 1.

    Only meaningful above the last resonance, ``omega_t > 2 pi N``.
    """
    a = _coefficient_tuple(coefficients)
    x = np.asarray(omega_t, dtype=float)
    if np.any(x <= 2 * np.pi * len(a)):
        raise ConvergenceRadiusError(
            f"smooth envelope needs omega_t > 2*pi*{len(a)} = {2 * np.pi * len(a):.6g}")
    return np.abs(2 / x * _bracket_times_sin(a, x, with_sin=False))


def truncated_power_series(coefficients, omega_t: float, k_max: int) -> complex:
    """The ``1/(omega T)`` expansion of ``G`` summed through ``k = k_max``.

    ``G ~ 2 e^{ix/2} sin(x/2)/x * [1 - sum_{k<=k_max} m_k (2 pi/x)^(2k)]`` where
    ``m_k = sum_n a_n n^(2k)``. Converges for ``omega_t > 2 pi N``.
    """
    a = _coefficient_tuple(coefficients)
    x = float(omega_t)
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    if not x > 2 * np.pi * len(a):
        raise ConvergenceRadiusError(
            f"omega_t={x:g} is inside the convergence radius 2*pi*N={2 * np.pi * len(a):.6g}")
    bracket = 1.0
    for k in range(k_max + 1):
        m = _moment(a, k)
        if m:
            bracket -= float(m) * (2 * np.pi / x) ** (2 * k)
    return complex(2 * np.exp(0.5j * x) * np.sin(x / 2) / x * bracket)


def saddle_point_rate(alpha: int, beta: int) -> float:
    """Leading-order decay rate of the bump transform.

    Steepest descent at either endpoint gives
    ``|G| ~ C x^{-(alpha+1)/(2 alpha)} exp(-gamma x^{(alpha-1)/alpha})`` with
    ``gamma = alpha beta (4 (alpha-1) beta)^{-(alpha-1)/alpha} cos(pi (alpha-1)/(2 alpha))``.
    For ``alpha = 2`` this is ``sqrt(beta / 2)``. Used to place the
    quadrature validity window and as an independent reference for fits,
    never as a substitute for a fitted rate.
    """
    s = (alpha - 1) / alpha
    return alpha * beta * (4 * (alpha - 1) * beta) ** (-s) * math.cos(math.pi * s / 2)


def bump_certified_limit(alpha: int, beta: int) -> float:
    """Largest ``omega T`` at which bump quadrature is certified.

    The point where the predicted magnitude
    ``x^{-(alpha+1)/(2 alpha)} exp(-gamma x^{(alpha-1)/alpha})`` reaches
    :data:`CERTIFIED_FLOOR`.
    """
    gamma = saddle_point_rate(alpha, beta)
    s = (alpha - 1) / alpha
    p = (alpha + 1) / (2 * alpha)
    target = math.log(CERTIFIED_FLOOR)

    def excess(logx):
        return -p * logx - gamma * math.exp(s * logx) - target

    return math.exp(optimize.brentq(excess, 0.0, 60.0, xtol=1e-12))


def _panel_integral(spec: CouplingSpec, x: float, panels: int) -> complex:
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    tau = (mid[:, None] + half[:, None] * _GL_NODES).ravel()
    w = (half[:, None] * _GL_WEIGHTS).ravel()
    # phase per panel keeps the exponent small and the sum well conditioned
    local = np.exp(1j * x * (tau - np.repeat(mid, _GL_NODES.size)))
    panel_sums = (w * unit_profile(spec, tau) * local).reshape(panels, -1).sum(axis=1)
    return complex(np.sum(np.exp(1j * x * mid) * panel_sums))


def _panel_count(spec: CouplingSpec, x: float) -> int:
    # panel width at most half an oscillation period in tau, i.e. pi / x
    floor = 64 if isinstance(spec.shape, Bump) else 8
    return max(floor, int(math.ceil(x / math.pi)))


def quadrature_spectrum(spec: CouplingSpec, omega_t: float, *,
                        return_error: bool = False):
    """``G(omega T)`` by composite Gauss-Legendre quadrature.

    Panels span at most half an oscillation period and carry 20 nodes
    (40 per period). The result is compared with a run on twice as many
    panels; the difference is the reported error and must not exceed
    1e-13.

    Raises
    ------
    CancellationLimitError
        For bump shapes beyond :func:`bump_certified_limit`, where the
        transform falls toward the double-precision noise floor.
    QuadratureError
        If the panel-doubling difference exceeds 1e-13.
    """
    x = float(omega_t)
    if x == 0.0:
        return (1.0 + 0j, 0.0) if return_error else 1.0 + 0j
    if x < 0:
        value, err = quadrature_spectrum(spec, -x, return_error=True)
        value = value.conjugate()
        return (value, err) if return_error else value
    shape = spec.shape
    if isinstance(shape, Bump):
        limit = bump_certified_limit(shape.alpha, shape.beta)
        if x > limit:
            raise CancellationLimitError(
                f"omega_t={x:g} exceeds the certified window {limit:.4g} for "
                f"bump(alpha={shape.alpha}, beta={shape.beta})")
    panels = _panel_count(spec, x)
    coarse = _panel_integral(spec, x, panels)
    fine = _panel_integral(spec, x, 2 * panels)
    err = abs(fine - coarse)
    if err > QUADRATURE_ATOL:
        raise QuadratureError(f"panel doubling changed G({x:g}) by {err:.2e}")
    return (fine, err) if return_error else fine


def oscillation_grid(lo: float, hi: float, per_window: int = 12) -> np.ndarray:
    """Log-spaced ``omega T`` grid with at least ``per_window`` points per 2 pi."""
    if not 0 < lo < hi:
        raise ValueError("need 0 < lo < hi")
    ratio = 1.0 + ENVELOPE_WINDOW / (per_window * hi)
    count = int(math.ceil(math.log(hi / lo) / math.log(ratio))) + 1
    return np.geomspace(lo, hi, max(count, 2))


@dataclass
class SpectralCurve:
    """Sampled ``G(omega T)`` for one coupling."""

    omega_t: np.ndarray
    values: np.ndarray
    source: str = ""

    def __post_init__(self):
        self.omega_t = np.asarray(self.omega_t, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if self.omega_t.shape != self.values.shape or self.omega_t.ndim != 1:
            raise ValueError("omega_t and values must be 1-D arrays of equal length")
        if self.omega_t.size and (self.omega_t[0] <= 0 or np.any(np.diff(self.omega_t) <= 0)):
            raise ValueError("omega_t must be positive and strictly increasing")

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["omega_t", "re", "im", "abs"])
        for x, v in zip(self.omega_t, self.values):
            writer.writerow([_fmt(x), _fmt(v.real), _fmt(v.imag), _fmt(abs(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, source: str = "") -> "SpectralCurve":
        rows = list(csv.DictReader(io.StringIO(text)))
        x = np.array([float(r["omega_t"]) for r in rows])
        v = np.array([complex(float(r["re"]), float(r["im"])) for r in rows])
        return cls(x, v, source)


@dataclass
class Envelope:
    """Oscillation-free upper profile of ``|G|``."""

    omega_t: np.ndarray
    magnitude: np.ndarray
    source: str = ""

    def __post_init__(self):
        self.omega_t = np.asarray(self.omega_t, dtype=float)
        self.magnitude = np.asarray(self.magnitude, dtype=float)
        if self.omega_t.shape != self.magnitude.shape:
            raise ValueError("omega_t and magnitude must have equal length")
        if np.any(self.magnitude < 0):
            raise ValueError("envelope magnitudes must be nonnegative")

    def __len__(self):
        return self.omega_t.size

    def restrict(self, lo: float, hi: float) -> "Envelope":
        keep = (self.omega_t >= lo) & (self.omega_t <= hi)
        return Envelope(self.omega_t[keep], self.magnitude[keep], self.source)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["omega_t", "envelope"])
        for x, m in zip(self.omega_t, self.magnitude):
            writer.writerow([_fmt(x), _fmt(m)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, source: str = "") -> "Envelope":
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls(np.array([float(r["omega_t"]) for r in rows]),
                   np.array([float(r["envelope"]) for r in rows]), source)


def _fmt(v: float) -> str:
    return repr(float(v))


def spectrum_curve(spec: CouplingSpec, omega_t: Iterable[float],
                   method: str = "auto") -> SpectralCurve:
    """Evaluate ``G`` on a grid. ``method``: ``auto``, ``analytic`` or ``quadrature``."""
    x = np.asarray(list(omega_t) if not isinstance(omega_t, np.ndarray) else omega_t,
                   dtype=float)
    if method not in ("auto", "analytic", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    closed_form = not isinstance(spec.shape, Bump)
    if method == "analytic" and not closed_form:
        raise ValueError("bump couplings have no closed-form transform")
    if closed_form and method != "quadrature":
        values = analytic_spectrum(spec, x)
    else:
        values = np.array([quadrature_spectrum(spec, xi) for xi in x])
    return SpectralCurve(x, values, spec.label)


def envelope_extract(curve: SpectralCurve) -> Envelope:
    """Envelope of ``|G|`` from windows of width 2 pi in ``omega T``.

    The range is tiled by consecutive 2 pi windows. In each tile the
    largest sample is a candidate; it is kept when it is also the largest
    sample of the 2 pi window centered on it, and reported with that
    window maximum. A tile whose maximum sits on the flank of a peak
    owned by a neighbouring tile therefore reports nothing, so each output
    point is a genuine local crest and at most one point comes from each
    tile.

    Raises
    ------
    UndersampledError
        If any tile holds fewer than 8 samples.
    """
    x = curve.omega_t
    mag = curve.magnitude
    half = ENVELOPE_WINDOW / 2
    n_tiles = int((x[-1] - x[0]) // ENVELOPE_WINDOW) if x.size else 0
    if n_tiles < 1:
        raise UndersampledError("curve spans less than one 2*pi window")
    edges = x[0] + ENVELOPE_WINDOW * np.arange(n_tiles + 1)
    starts = np.searchsorted(x, edges[:-1], side="left")
    stops = np.searchsorted(x, edges[1:], side="left")
    sparse = np.nonzero(stops - starts < MIN_POINTS_PER_WINDOW)[0]
    if sparse.size:
        i = sparse[0]
        raise UndersampledError(
            f"window [{edges[i]:.6g}, {edges[i + 1]:.6g}) holds {stops[i] - starts[i]} "
            f"points; need at least {MIN_POINTS_PER_WINDOW}")
    xs, ms = [], []
    for a, b in zip(starts, stops):
        j = a + int(np.argmax(mag[a:b]))
        lo = np.searchsorted(x, x[j] - half, side="left")
        hi = np.searchsorted(x, x[j] + half, side="right")
        peak = mag[lo:hi].max()
        if mag[j] < peak:
            continue
        xs.append(x[j])
        ms.append(peak)
    return Envelope(np.array(xs), np.array(ms), curve.source)


def window_max(curve: SpectralCurve, centers) -> np.ndarray:
    """Maximum of ``|G|`` over the 2 pi window centered at each point."""
    x = curve.omega_t
    mag = curve.magnitude
    centers = np.asarray(centers, dtype=float)
    lo = np.searchsorted(x, centers - ENVELOPE_WINDOW / 2, side="left")
    hi = np.searchsorted(x, centers + ENVELOPE_WINDOW / 2, side="right")
    if np.any(hi - lo < MIN_POINTS_PER_WINDOW):
        raise UndersampledError("window around a center holds too few samples")
    return np.array([mag[a:b].max() for a, b in zip(lo, hi)])


def window_envelope(spec: CouplingSpec, omega_t: float, samples: int = 32) -> float:
    """Maximum of ``|G|`` over the 2 pi window centered at ``omega_t``.

    The window is clipped at ``omega T = 0``. Bumps raise
    :class:`CancellationLimitError` unless the whole window is certified.
    """
    x = float(omega_t)
    if x <= 0:
        raise ValueError("omega_t must be positive")
    half = ENVELOPE_WINDOW / 2
    if isinstance(spec.shape, Bump):
        limit = bump_certified_limit(spec.shape.alpha, spec.shape.beta)
        if x + half > limit:
            raise CancellationLimitError(
                f"envelope window at omega_t={x:g} leaves the certified range {limit:.4g}")
    grid = np.linspace(max(x - half, 0.0), x + half, samples)
    grid = grid[grid > 0]
    return float(spectrum_curve(spec, grid).magnitude.max())


def calibrate_bump(alpha: int, beta: int, fit_range: tuple[float, float] | None = None,
                   *, min_points: int = 8):
    """Fit the subexponential law to the certified bump envelope.

    The default range is ``[50, 250]`` clipped to the certified window; a
    short window (large ``beta``) starts lower so enough crests remain.
    Returns a :class:`~protmeas.fitting.DecayFit` for extrapolation.
    """
    from .fitting import fit_subexponential

    limit = bump_certified_limit(alpha, beta)
    if fit_range is None:
        hi = min(250.0, limit)
        fit_range = (min(50.0, hi / 3), hi)
    lo, hi = fit_range
    if hi > limit:
        raise CancellationLimitError(f"calibration range ends beyond {limit:.4g}")
    env = _bump_envelope(alpha, beta, min(1.0, lo), min(400.0, limit), 16)
    return fit_subexponential(env, alpha, (lo, hi), min_points=min_points)


@functools.lru_cache(maxsize=8)
def _bump_envelope(alpha, beta, lo, hi, per_window) -> Envelope:
    grid = oscillation_grid(lo, hi, per_window)
    curve = spectrum_curve(CouplingSpec.bump(alpha, beta), grid, method="quadrature")
    return envelope_extract(curve)


@dataclass
class Crossover:
    """Where the bump envelope drops below a series envelope for good."""

    order: int
    omega_t_star: float | None
    certified: bool
    window: tuple[float, float]
    alpha: int = 2
    beta: int = 1
    calibration: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"N": self.order, "omega_t_star": self.omega_t_star,
                "certified": self.certified, "extrapolated": not self.certified,
                "window": list(self.window), "alpha": self.alpha, "beta": self.beta,
                **({"calibration": self.calibration} if self.calibration else {})}


def find_crossover(order: int, alpha: int = 2, beta: int = 1,
                   window: tuple[float, float] = (1.0, 400.0), *,
                   calibration_range: tuple[float, float] = (50.0, 250.0),
                   extrapolate_to: float = 1e9,
                   per_window: int = 16) -> Crossover:
    """Locate ``omega T*`` beyond which the bump envelope stays below the
    envelope of the order-``order`` series (``order = 0`` is constant coupling).

    Inside ``window`` (clipped to the bump's certified limit) both
    envelopes come from sampled transforms, the bump by quadrature. If the
    bump is still above at the end of the window, the crossing is sought
    with the asymptotic bump form, calibrated on ``calibration_range``,
    against the series smooth envelope; the result is then marked
    ``certified=False``.
    """
    from .fitting import fit_subexponential

    lo, hi = window
    hi = min(hi, bump_certified_limit(alpha, beta))
    grid = oscillation_grid(lo, hi, per_window)
    env = _bump_envelope(alpha, beta, lo, hi, per_window)
    series_spec = CouplingSpec.constant() if order == 0 else CouplingSpec.series(order)
    series_curve = spectrum_curve(series_spec, grid)
    inner = (env.omega_t - ENVELOPE_WINDOW / 2 >= grid[0]) & \
            (env.omega_t + ENVELOPE_WINDOW / 2 <= grid[-1])
    centers = env.omega_t[inner]
    bump_env = env.magnitude[inner]
    series_env = window_max(series_curve, centers)
    above = bump_env >= series_env
    if not above[-1]:
        last_above = np.nonzero(above)[0]
        star = float(centers[last_above[-1] + 1]) if last_above.size else float(centers[0])
        return Crossover(order, star, True, (lo, hi), alpha, beta)

    fit = fit_subexponential(env, alpha, calibration_range)
    a = series_spec if order else None
    start = max(hi, 2 * np.pi * max(order, 1) * 1.01)

    # log domain: the extrapolated bump underflows long before 1e9
    def gap(logx):
        xv = math.exp(logx)
        log_bump = (math.log(fit.prefactor) - fit.prefactor_exponent * logx
                    - fit.rate * xv ** fit.stretch)
        return log_bump - math.log(float(smooth_envelope(a, xv)))

    probe = np.linspace(math.log(start), math.log(extrapolate_to), 4000)
    gaps = np.array([gap(v) for v in probe])
    calibration = {"rate": fit.rate, "prefactor": fit.prefactor,
                   "range": list(calibration_range), "residual": fit.residual}
    if gaps[-1] >= 0:
        return Crossover(order, None, False, (lo, hi), alpha, beta, calibration)
    last = np.nonzero(gaps >= 0)[0]
    if not last.size:
        star = start
    else:
        i = last[-1]
        star = math.exp(optimize.brentq(gap, probe[i], probe[i + 1], xtol=1e-12))
    return Crossover(order, float(star), False, (lo, hi), alpha, beta, calibration)
