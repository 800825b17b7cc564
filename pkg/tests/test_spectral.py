import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from protmeas import (CancellationLimitError, ConvergenceRadiusError, CouplingSpec,
                      Envelope, SpectralCurve, UndersampledError, analytic_spectrum,
                      bump_certified_limit, envelope_extract, eval_coupling, find_crossover,
                      oscillation_grid, quadrature_spectrum, smooth_envelope, spectrum_curve,
                      solve_series_coefficients, truncated_power_series, window_envelope)
from protmeas.spectral import saddle_point_rate

CLOSED_FORM = [CouplingSpec.constant()] + [CouplingSpec.series(N) for N in range(1, 6)]


def constant_transform(x):
    return 2 * np.exp(0.5j * x) * np.sin(x / 2) / x


def brute_force_transform(spec, x):
    """Adaptive quadrature of the real and imaginary parts separately."""
    T = spec.duration
    kw = dict(epsabs=1e-14, epsrel=1e-12, limit=2000)
    re = integrate.quad(lambda t: eval_coupling(spec, t), 0, T, weight="cos", wvar=x / T, **kw)[0]
    im = integrate.quad(lambda t: eval_coupling(spec, t), 0, T, weight="sin", wvar=x / T, **kw)[0]
    return complex(re, im)


# ---------------------------------------------------------------- closed form

def test_constant_limits():
    assert analytic_spectrum(None, 1e-12) == pytest.approx(1.0, abs=1e-12)
    assert analytic_spectrum(None, 0.0) == 1.0
    assert abs(analytic_spectrum(None, 2 * np.pi)) < 1e-15


def test_constant_matches_closed_form():
    x = np.geomspace(0.1, 1e4, 50)
    np.testing.assert_allclose(analytic_spectrum(None, x), constant_transform(x), rtol=1e-13)


@pytest.mark.parametrize("spec", CLOSED_FORM, ids=lambda s: s.label)
def test_zero_frequency_is_normalization(spec):
    assert analytic_spectrum(spec, 1e-13) == pytest.approx(1.0, abs=1e-12)
    assert quadrature_spectrum(spec, 1e-13) == pytest.approx(1.0, abs=1e-12)


def test_first_order_series_asymptote():
    c = solve_series_coefficients(1)
    for x in (1e3 + 0.4, 3e4 + 1.1):
        expected = 2 * (2 * np.pi) ** 2 / x ** 3 * abs(math.sin(x / 2))
        assert abs(analytic_spectrum(c, x)) == pytest.approx(expected, rel=5 / x ** 2 * 50)


@pytest.mark.parametrize("N, n", [(1, 1), (2, 1), (2, 2), (4, 1), (4, 4)])
def test_resonance_limit_is_accurate(N, n):
    c = solve_series_coefficients(N)
    k = 2 * np.pi * n
    spec = CouplingSpec.series(N)
    for d in (-2e-6, -5e-7, 0.0, 5e-7, 2e-6):
        assert abs(analytic_spectrum(c, k + d) - brute_force_transform(spec, k + d)) < 1e-11


@pytest.mark.parametrize("spec", CLOSED_FORM, ids=lambda s: s.label)
def test_negative_frequency_is_conjugate(spec):
    for x in (0.7, 13.0, 500.0):
        assert analytic_spectrum(spec, -x) == np.conj(analytic_spectrum(spec, x))
        assert quadrature_spectrum(spec, -x) == np.conj(quadrature_spectrum(spec, x))


# ---------------------------------------------------------------- quadrature

@pytest.mark.parametrize("spec", CLOSED_FORM, ids=lambda s: s.label)
def test_quadrature_oracle_equivalence(spec):
    x = np.geomspace(1, 1e4, 100)
    quad = np.array([quadrature_spectrum(spec, xi) for xi in x])
    assert np.max(np.abs(quad - analytic_spectrum(spec, x))) <= 1e-10


def test_quadrature_reports_error(bump21):
    value, err = quadrature_spectrum(bump21, 37.0, return_error=True)
    assert 0 <= err <= 1e-13
    assert abs(value - brute_force_transform(bump21, 37.0)) < 1e-11


def test_bump_small_frequency_and_symmetry(bump21):
    assert quadrature_spectrum(bump21, 1e-13) == pytest.approx(1.0, abs=1e-12)
    assert quadrature_spectrum(bump21, -20.0) == np.conj(quadrature_spectrum(bump21, 20.0))


def test_bump_cancellation_limit(bump21):
    limit = bump_certified_limit(2, 1)
    assert 400 < limit < 1000
    quadrature_spectrum(bump21, limit * 0.99)
    with pytest.raises(CancellationLimitError):
        quadrature_spectrum(bump21, limit * 1.01)


def test_saddle_point_rate_special_case():
    assert saddle_point_rate(2, 1) == pytest.approx(1 / math.sqrt(2), rel=1e-15)
    assert saddle_point_rate(2, 4) == pytest.approx(math.sqrt(2), rel=1e-15)


@given(st.sampled_from(CLOSED_FORM + [CouplingSpec.bump(2, 1), CouplingSpec.bump(3, 2)]),
       st.floats(0.01, 180))
def test_magnitude_bounded_by_total_variation(spec, x):
    l1 = integrate.quad(lambda t: abs(eval_coupling(spec, t)), 0, spec.duration,
                        limit=200, points=[0.05, 0.95])[0]
    assert abs(quadrature_spectrum(spec, x)) <= l1 + 1e-9


# ---------------------------------------------------------------- power series

def test_power_series_empty_sum():
    for k in (0, 3):
        v = truncated_power_series([0, 0], 40.0, k)
        assert v == pytest.approx(constant_transform(40.0), abs=1e-15)


def test_power_series_converges():
    c = solve_series_coefficients(2)
    assert abs(truncated_power_series(c, 100.0, 20) - analytic_spectrum(c, 100.0)) < 1e-12


@pytest.mark.parametrize("N", [1, 2, 3, 4])
def test_power_series_low_terms_vanish(N):
    c = solve_series_coefficients(N)
    assert truncated_power_series(c, 10 * N * 2 * np.pi, N - 1) == 0


def test_power_series_rejects_small_frequency():
    with pytest.raises(ConvergenceRadiusError):
        truncated_power_series(solve_series_coefficients(3), 2 * np.pi * 3, 5)
    with pytest.raises(ConvergenceRadiusError):
        smooth_envelope(solve_series_coefficients(3), 10.0)


# ---------------------------------------------------------------- envelopes

def test_envelope_of_constant_curve_is_exact():
    x = oscillation_grid(1, 200)
    env = envelope_extract(SpectralCurve(x, np.full(x.size, 0.25 + 0j)))
    assert np.all(env.magnitude == 0.25)


def test_envelope_recovers_known_profile():
    x = oscillation_grid(10, 2000, per_window=24)
    h = x ** -1.5
    env = envelope_extract(SpectralCurve(x, np.abs(np.sin(x / 2)) * h))
    inner = (env.omega_t > 20) & (env.omega_t < 1990)
    ratio = env.magnitude[inner] / env.omega_t[inner] ** -1.5
    assert np.all(np.abs(ratio - 1) < 0.03)


def test_envelope_dominates_curve(bump21):
    x = oscillation_grid(1, 150, per_window=16)
    curve = spectrum_curve(bump21, x)
    env = envelope_extract(curve)
    at = np.interp(env.omega_t, curve.omega_t, curve.magnitude)
    assert np.all(env.magnitude >= at - 1e-12)


def test_envelope_rejects_sparse_input():
    x = np.geomspace(1, 1000, 50)
    with pytest.raises(UndersampledError):
        envelope_extract(SpectralCurve(x, np.ones(50, complex)))


def test_window_envelope_brackets_smooth_form():
    spec = CouplingSpec.series(2)
    for x in (200.0, 3000.0):
        w = window_envelope(spec, x, samples=400)
        upper = float(smooth_envelope(spec, x - np.pi))
        lower = float(smooth_envelope(spec, x + np.pi))
        assert lower * (1 - 1e-3) <= w <= upper


def test_curve_csv_round_trip():
    x = np.geomspace(1, 50, 7)
    curve = spectrum_curve(CouplingSpec.series(1), x)
    text = curve.to_csv()
    assert text.splitlines()[0] == "omega_t,re,im,abs"
    back = SpectralCurve.from_csv(text)
    np.testing.assert_array_equal(back.values, curve.values)
    env = Envelope(x, np.abs(curve.values))
    assert env.to_csv().splitlines()[0] == "omega_t,envelope"
    np.testing.assert_array_equal(Envelope.from_csv(env.to_csv()).magnitude, env.magnitude)


def test_curve_validation():
    with pytest.raises(ValueError):
        SpectralCurve([2.0, 1.0], [1, 1])
    with pytest.raises(ValueError):
        Envelope([1.0], [-1.0])


# ---------------------------------------------------------------- crossover

@pytest.mark.parametrize("N", [0, 1])
def test_crossover_inside_certified_window(N):
    c = find_crossover(N)
    assert c.certified and 1 < c.omega_t_star <= 400


def test_crossover_beyond_window_is_flagged():
    c = find_crossover(3)
    assert not c.certified
    assert c.to_dict()["extrapolated"] is True
    assert c.omega_t_star > 400
    assert c.calibration["range"] == [50.0, 250.0]
