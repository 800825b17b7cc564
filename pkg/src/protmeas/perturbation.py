"""Transition amplitudes and state disturbance (hbar = 1).

A system with nondegenerate levels ``E_k`` starts in eigenstate ``n`` and is
coupled through ``g(t) O`` during ``0 <= t <= T``. Amplitudes are those of
the system subspace with the pointer momentum set to 1; they are linear in
``O`` at first order.

Leading-order amplitudes are normalized so that their ratio to the exact
first-order amplitude tends to ``+1`` at large ``omega T``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .coupling import Bump, Constant, CouplingSpec, SeriesCoefficients, SinusoidalSeries
from .exceptions import IntegrationError
from .spectral import analytic_spectrum, quadrature_spectrum, smooth_envelope

__all__ = [
    "SystemModel",
    "AmplitudeSet",
    "OracleResult",
    "TIERS",
    "first_order_amplitude",
    "leading_order_first",
    "leading_order_higher",
    "leading_order",
    "total_leading_amplitude",
    "nested_amplitude_oracle",
    "disturbance_probability",
    "amplitude_set",
]

TIERS = ("first_order", "total_leading")
_HERMITIAN_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Energy levels, observable and initial eigenstate index."""

    energies: np.ndarray
    observable: np.ndarray
    initial_index: int = 0

    def __post_init__(self):
        E = np.asarray(self.energies, dtype=float)
        O = np.asarray(self.observable, dtype=complex)
        if E.ndim != 1 or E.size < 2:
            raise ValueError("need at least two energy levels")
        if not np.all(np.isfinite(E)):
            raise ValueError("energies must be finite")
        if O.shape != (E.size, E.size):
            raise ValueError(f"observable must be {E.size}x{E.size}, got {O.shape}")
        gaps = np.abs(E[:, None] - E[None, :])[~np.eye(E.size, dtype=bool)]
        if np.any(gaps <= 0):
            raise ValueError("energy spectrum must be nondegenerate")
        if np.max(np.abs(O - O.conj().T)) > _HERMITIAN_TOL:
            raise ValueError("observable must be Hermitian")
        n = self.initial_index
        if isinstance(n, bool) or int(n) != n or not 0 <= n < E.size:
            raise ValueError(f"initial_index must lie in [0, {E.size})")
        E.setflags(write=False)
        O.setflags(write=False)
        object.__setattr__(self, "energies", E)
        object.__setattr__(self, "observable", O)
        object.__setattr__(self, "initial_index", int(n))

    @property
    def dimension(self) -> int:
        return self.energies.size

    @property
    def targets(self) -> list[int]:
        return [m for m in range(self.dimension) if m != self.initial_index]

    def omega(self, target: int) -> float:
        """Transition frequency ``E_m - E_n``."""
        return float(self.energies[target] - self.energies[self.initial_index])

    def element(self, row: int, col: int) -> complex:
        return complex(self.observable[row, col])

    def scaled(self, factor: float) -> "SystemModel":
        return SystemModel(self.energies, factor * self.observable, self.initial_index)

    def shifted(self, offset: float) -> "SystemModel":
        return SystemModel(self.energies + offset, self.observable, self.initial_index)

    def to_dict(self) -> dict:
        O = self.observable
        return {"energies": self.energies.tolist(),
                "observable": [[[z.real, z.imag] for z in row] for row in O],
                "initial": self.initial_index}

    @classmethod
    def from_dict(cls, data: dict) -> "SystemModel":
        """Read ``{"energies": [...], "observable": [[[re, im], ...], ...], "initial": n}``.

        Plain real matrix entries are accepted as well as ``[re, im]`` pairs.
        """
        rows = []
        for row in data["observable"]:
            rows.append([complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v)
                         for v in row])
        return cls(np.array(data["energies"], dtype=float), np.array(rows, dtype=complex),
                   int(data.get("initial", 0)))


def _check_target(model: SystemModel, target: int) -> None:
    if not 0 <= target < model.dimension:
        raise ValueError(f"target {target} out of range")
    if target == model.initial_index:
        raise ValueError("target must differ from the initial state")


def _series_order_and_moment(coefficients) -> tuple[int, float]:
    """Order ``N`` and sign-corrected leading moment (``1`` for constant coupling)."""
    if isinstance(coefficients, CouplingSpec):
        coefficients = coefficients.shape
    if coefficients is None or isinstance(coefficients, Constant):
        return 0, 1.0
    if isinstance(coefficients, SinusoidalSeries):
        coefficients = coefficients.coefficients
    if isinstance(coefficients, Bump):
        raise TypeError("leading-order formulas apply to constant and series couplings only")
    if not isinstance(coefficients, SeriesCoefficients):
        raise TypeError(f"unsupported coefficient type {type(coefficients).__name__}")
    # G -> -2 e^{ix/2} sin(x/2) (2 pi)^2N M_N / x^(2N+1)
    return coefficients.order, -float(coefficients.leading_moment)


def _decay_factor(coefficients, x: float) -> float:
    order, moment = _series_order_and_moment(coefficients)
    return (2 * math.pi) ** (2 * order) * moment / x ** (2 * order + 1)


def first_order_amplitude(model: SystemModel, spec: CouplingSpec, target: int) -> complex:
    """``-i O_mn G(omega_mn T)``.

    Closed form for constant and series couplings, quadrature for bumps
    (which may raise :class:`~protmeas.exceptions.CancellationLimitError`).
    """
    _check_target(model, target)
    o_mn = model.element(target, model.initial_index)
    if o_mn == 0:
        return 0j
    x = model.omega(target) * spec.duration
    if isinstance(spec.shape, Bump):
        G = quadrature_spectrum(spec, x)
    else:
        G = analytic_spectrum(spec, x)
    return -1j * o_mn * complex(G)


def leading_order_first(model: SystemModel, coefficients, T: float, target: int, *,
                        envelope: bool = False) -> complex:
    """Large-``omega T`` form of the first-order amplitude.

    ``coefficients`` is ``None``/:class:`Constant` (constant coupling), a
    :class:`SeriesCoefficients` or a coupling spec. With ``envelope=True``
    the ``sin(omega T / 2)`` factor is replaced by 1.
    """
    _check_target(model, target)
    x = model.omega(target) * T
    o_mn = model.element(target, model.initial_index)
    s = 1.0 if envelope else math.sin(x / 2)
    return -2j * o_mn * np.exp(0.5j * x) * s * _decay_factor(coefficients, x)


def leading_order_higher(model: SystemModel, coefficients, T: float, target: int,
                         order: int) -> complex:
    """Leading ``1/omega T`` term of the ``order``-th perturbative amplitude."""
    if order < 2:
        raise ValueError("order must be >= 2; use leading_order_first for order 1")
    return leading_order(model, coefficients, T, target, order)


def leading_order(model: SystemModel, coefficients, T: float, target: int,
                  order: int) -> complex:
    """Leading term at any order ``>= 1``; order 1 coincides with
    :func:`leading_order_first`."""
    if int(order) != order or order < 1:
        raise ValueError("order must be a positive integer")
    _check_target(model, target)
    n = model.initial_index
    x = model.omega(target) * T
    o_mn = model.element(target, n)
    o_mm = model.element(target, target)
    o_nn = model.element(n, n)
    k = order - 1
    bracket = o_mm ** k - o_nn ** k * np.exp(1j * x)
    return ((-1j) ** order * (1j * o_mn / math.factorial(k)) * bracket
            * _decay_factor(coefficients, x))


def total_leading_amplitude(model: SystemModel, coefficients, T: float, target: int, *,
                            envelope: bool = False) -> complex:
    """Leading terms summed over all orders.

    The diagonal elements only rescale the sine argument by ``1 + chi`` with
    ``chi = (O_mm - O_nn) / (omega T)``. An overall phase is dropped, so only
    the magnitude is comparable with explicit sums over orders.
    """
    _check_target(model, target)
    n = model.initial_index
    x = model.omega(target) * T
    o_mn = model.element(target, n)
    chi = (model.element(target, target) - model.element(n, n)).real / x
    s = 1.0 if envelope else math.sin(0.5 * x * (1 + chi))
    return -2j * o_mn * np.exp(0.5j * x) * s * _decay_factor(coefficients, x)


class OracleResult(NamedTuple):
    value: complex
    error: float
    levels: int


def _nested_on_grid(model: SystemModel, spec: CouplingSpec, order: int, points: int):
    T = spec.duration
    t = np.linspace(0.0, T, points)
    phase = np.exp(1j * np.outer(t, model.energies))
    g = spec(t)
    O_t = model.observable.T
    c = np.zeros((points, model.dimension), dtype=complex)
    c[:, model.initial_index] = 1.0
    for _ in range(order):
        # interaction picture: e^{iEt} O e^{-iEt} c
        rhs = -1j * g[:, None] * phase * ((c * phase.conj()) @ O_t)
        c = cumulative_trapezoid(rhs, t, axis=0, initial=0)
    return c[-1]


def nested_amplitude_oracle(model: SystemModel, spec: CouplingSpec, target: int,
                            order: int, *, levels: int = 6, rtol: float = 1e-6,
                            atol: float = 1e-14) -> OracleResult:
    """Brute-force ``order``-fold time-ordered integral of the amplitude.

    Nested cumulative trapezoid rules on successively halved grids are
    combined by Romberg extrapolation. The coarsest grid resolves the fastest
    transition frequency with at least 16 points per period. The reported
    error is the change made by the last extrapolation step plus a rounding
    allowance.

    Raises
    ------
    IntegrationError
        If that change exceeds ``rtol * |value| + atol`` plus the rounding
        allowance.
    """
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    if model.dimension > 4:
        raise ValueError("the nested oracle is limited to dimension <= 4")
    if levels < 2:
        raise ValueError("levels must be >= 2")
    _check_target(model, target)
    spread = float(np.ptp(model.energies)) * spec.duration
    base = max(6, math.ceil(math.log2(16 * spread / (2 * math.pi) + 1)))
    table = [_nested_on_grid(model, spec, order, 2 ** (base + k) + 1)[target]
             for k in range(levels)]
    previous = table[-1]
    for j in range(1, levels):
        previous = table[-1]
        table = [(4 ** j * table[i + 1] - table[i]) / (4 ** j - 1)
                 for i in range(len(table) - 1)]
    value = complex(table[0])
    # the Romberg change alone ignores accumulated rounding in the sums
    scale = (np.abs(model.observable).max() * float(np.abs(spec(
        np.linspace(0, spec.duration, 1025))).mean() * spec.duration)) ** order
    roundoff = 10 * np.finfo(float).eps * math.sqrt(2 ** (base + levels)) * scale
    change = abs(value - previous)
    if change > rtol * abs(value) + atol + roundoff:
        raise IntegrationError(
            f"nested integral did not converge: change {change:.2e} vs value {abs(value):.2e}")
    error = change + roundoff
    return OracleResult(value, float(error), levels)


def _tier_amplitude(model, spec, target, tier, envelope):
    if tier == "first_order":
        if not envelope:
            return first_order_amplitude(model, spec, target)
        if isinstance(spec.shape, Bump):
            raise TypeError("envelope amplitudes need a constant or series coupling")
        x = abs(model.omega(target)) * spec.duration
        return abs(model.element(target, model.initial_index)) * float(smooth_envelope(spec, x))
    if tier == "total_leading":
        if isinstance(spec.shape, Bump):
            raise TypeError("the total_leading tier needs a constant or series coupling")
        return total_leading_amplitude(model, spec, spec.duration, target, envelope=envelope)
    raise ValueError(f"tier must be one of {TIERS}, got {tier!r}")


def disturbance_probability(model: SystemModel, spec: CouplingSpec,
                            tier: str = "first_order", *, envelope: bool = False) -> float:
    """Transition probability out of the initial state, ``sum_m |A_m|^2``.

    With ``envelope=True`` the oscillating sine factors are replaced by 1.
    """
    return float(sum(abs(_tier_amplitude(model, spec, m, tier, envelope)) ** 2
                     for m in model.targets))


@dataclass
class AmplitudeSet:
    """Amplitudes of every target state, per tier."""

    first_order: dict[int, complex]
    leading_by_order: dict[tuple[int, int], complex] = field(default_factory=dict)
    total_leading: dict[int, complex] = field(default_factory=dict)
    tier: str = "first_order"

    @property
    def disturbance(self) -> float:
        source = self.first_order if self.tier == "first_order" else self.total_leading
        return float(sum(abs(v) ** 2 for v in source.values()))

    def rows(self) -> list[dict]:
        out = [{"m": m, "tier": "first_order", "re": v.real, "im": v.imag}
               for m, v in sorted(self.first_order.items())]
        out += [{"m": m, "tier": f"leading_{ell}", "re": v.real, "im": v.imag}
                for (m, ell), v in sorted(self.leading_by_order.items())]
        out += [{"m": m, "tier": "total_leading", "re": v.real, "im": v.imag}
                for m, v in sorted(self.total_leading.items())]
        return out

    def to_dict(self) -> dict:
        return {"amplitudes": self.rows(), "disturbance": self.disturbance,
                "disturbance_tier": self.tier}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def amplitude_set(model: SystemModel, spec: CouplingSpec, *, max_order: int = 3,
                  tier: str = "first_order") -> AmplitudeSet:
    """Collect every amplitude tier available for ``spec``.

    Bump couplings only have the first-order tier.
    """
    if tier not in TIERS:
        raise ValueError(f"tier must be one of {TIERS}")
    first = {m: first_order_amplitude(model, spec, m) for m in model.targets}
    if isinstance(spec.shape, Bump):
        if tier != "first_order":
            raise TypeError("bump couplings only support the first_order tier")
        return AmplitudeSet(first, tier=tier)
    T = spec.duration
    by_order = {(m, ell): leading_order(model, spec, T, m, ell)
                for m in model.targets for ell in range(1, max_order + 1)}
    total = {m: total_leading_amplitude(model, spec, T, m) for m in model.targets}
    return AmplitudeSet(first, by_order, total, tier)
