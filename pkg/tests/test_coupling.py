import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from protmeas import (Bump, CouplingSpec, MeasurementWindow, SeriesCoefficients,
                      bump_normalization, coupling_samples, endpoint_derivative,
                      eval_coupling, solve_series_coefficients)


def oracle_coefficient(N, n):
    """Lagrange-basis closed form of the solution, independent of elimination."""
    out = Fraction(1)
    for j in range(1, N + 1):
        if j != n:
            out *= Fraction(j * j, j * j - n * n)
    return out


# ---------------------------------------------------------------- coefficients

@pytest.mark.parametrize("N, expected", [
    (1, ["1"]),
    (2, ["4/3", "-1/3"]),
    (3, ["3/2", "-3/5", "1/10"]),
])
def test_known_coefficients(N, expected):
    assert solve_series_coefficients(N).as_strings() == expected


@pytest.mark.parametrize("N", range(1, 13))
def test_coefficients_match_closed_form_and_moments(N):
    c = solve_series_coefficients(N)
    assert list(c.values) == [oracle_coefficient(N, n) for n in range(1, N + 1)]
    assert c.moment(0) == 1
    assert all(c.moment(k) == 0 for k in range(1, N))
    assert c.leading_moment == (-1) ** (N + 1) * math.factorial(N) ** 2


@pytest.mark.parametrize("bad", [0, -3])
def test_order_must_be_positive(bad):
    with pytest.raises(ValueError):
        solve_series_coefficients(bad)


def test_order_must_be_integer():
    with pytest.raises(TypeError):
        solve_series_coefficients(2.0)


def test_series_coefficients_validate_conditions():
    with pytest.raises(ValueError):
        SeriesCoefficients((Fraction(1, 2), Fraction(1, 2)))
    SeriesCoefficients((Fraction(4, 3), Fraction(-1, 3)))


# ---------------------------------------------------------------- evaluation

def test_constant_value():
    spec = CouplingSpec.constant(2.0)
    assert eval_coupling(spec, 0.3) == 0.5
    assert eval_coupling(spec, -0.1) == 0.0
    assert eval_coupling(spec, 2.1) == 0.0


def test_series_first_order_values():
    spec = CouplingSpec.series(1, 3.0)
    assert eval_coupling(spec, 0.0) == 0.0
    assert eval_coupling(spec, 1.5) == pytest.approx(2 / 3.0, rel=1e-15)
    assert eval_coupling(spec, 3.0) == 0.0


def test_series_matches_cosine_form():
    spec = CouplingSpec.series(3)
    a = spec.shape.coefficients.as_floats()
    t = np.linspace(0, 1, 37)
    direct = 1 - sum(an * np.cos(2 * np.pi * n * t) for n, an in enumerate(a, 1))
    np.testing.assert_allclose(eval_coupling(spec, t), direct, atol=1e-14)


def test_bump_endpoints_exactly_zero(bump21):
    assert eval_coupling(bump21, 0.0) == 0.0
    assert eval_coupling(bump21, 1.0) == 0.0
    near = np.array([1e-16, 5e-16, 1 - 1e-16, 1 - 5e-16])
    with np.errstate(all="raise"):
        values = eval_coupling(bump21, near)
    assert np.all(values == 0.0)


def test_bump_invalid_parameters():
    with pytest.raises(ValueError):
        CouplingSpec.bump(1, 1)
    with pytest.raises(ValueError):
        CouplingSpec.bump(2, 0)


def test_window_must_be_positive():
    with pytest.raises(ValueError):
        MeasurementWindow(0.0)
    with pytest.raises(ValueError):
        MeasurementWindow(float("inf"))


SPECS = [CouplingSpec.constant(), CouplingSpec.constant(2.5), CouplingSpec.series(1),
         CouplingSpec.series(4, 0.7), CouplingSpec.series(12), CouplingSpec.bump(2, 1),
         CouplingSpec.bump(3, 4, 1.9), CouplingSpec.bump(8, 8)]


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.label)
def test_unit_area(spec):
    T = spec.duration
    area, _ = integrate.quad(lambda t: eval_coupling(spec, t), 0, T,
                             epsabs=0, epsrel=1e-13, limit=400)
    assert area == pytest.approx(1.0, rel=1e-10)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.label)
def test_mirror_symmetry(spec):
    T = spec.duration
    t = np.random.default_rng(7).uniform(0, T, 1000)
    np.testing.assert_allclose(eval_coupling(spec, t), eval_coupling(spec, T - t),
                               rtol=1e-12, atol=1e-13 / T)


@given(st.floats(0, 1), st.sampled_from(SPECS))
def test_coupling_nonnegative_only_for_bump_and_constant(tau, spec):
    value = eval_coupling(spec, tau * spec.duration)
    assert math.isfinite(value)
    if not spec.shape.name == "series":
        assert value >= 0


# ---------------------------------------------------------------- normalization

def test_bump_normalization_second_rule_and_scaling():
    c1 = bump_normalization(2, 1, MeasurementWindow(1.0))
    # independent rule: tanh-sinh on the full interval
    import mpmath
    ref = mpmath.quad(lambda t: mpmath.exp(-1 / (1 - (2 * t - 1) ** 2)), [0, 0.5, 1])
    assert c1 == pytest.approx(float(ref), rel=1e-10)
    assert bump_normalization(2, 1, MeasurementWindow(2.0)) == 2 * c1


@pytest.mark.parametrize("alpha", [2, 5, 8])
@pytest.mark.parametrize("beta", [1, 8])
def test_bump_normalization_converges_on_supported_range(alpha, beta):
    assert bump_normalization(alpha, beta) > 0


# ---------------------------------------------------------------- derivatives

def test_odd_derivatives_vanish_analytically():
    d = endpoint_derivative(CouplingSpec.series(2), 1)
    assert (d.left, d.right) == (0.0, 0.0)


@pytest.mark.parametrize("N", [2, 3, 5])
def test_analytic_even_derivatives(N):
    spec = CouplingSpec.series(N)
    for j in range(2, 2 * N - 1, 2):
        d = endpoint_derivative(spec, j, method="analytic")
        assert (d.left, d.right) == (0.0, 0.0)
    assert endpoint_derivative(spec, 2 * N, method="analytic").left != 0.0


@pytest.mark.parametrize("N", [1, 2, 3])
def test_finite_difference_agrees_with_analytic(N):
    spec = CouplingSpec.series(N, 1.3)
    for j in range(0, 2 * N + 1):
        fd = endpoint_derivative(spec, j, method="finite_difference")
        exact = endpoint_derivative(spec, j, method="analytic")
        tol = fd.error + 1e-9 * abs(exact.left)
        assert abs(fd.left - exact.left) <= tol
        assert abs(fd.right - exact.right) <= tol


def test_constant_has_jump_in_value_only():
    spec = CouplingSpec.constant()
    assert endpoint_derivative(spec, 0, method="finite_difference").left == pytest.approx(1.0)
    assert abs(endpoint_derivative(spec, 1, method="finite_difference").left) < 1e-20


def test_bump_derivatives_vanish(bump21):
    for j in range(0, 4):
        d = endpoint_derivative(bump21, j)
        assert abs(d.left) <= d.error + 1e-300 and abs(d.right) <= d.error + 1e-300


def test_analytic_branch_refuses_bump(bump21):
    with pytest.raises(ValueError):
        endpoint_derivative(bump21, 2, method="analytic")


# ---------------------------------------------------------------- samples and io

def test_samples_constant():
    rows = coupling_samples(CouplingSpec.constant(2.0), 3)
    np.testing.assert_array_equal(rows, [[0, 0.5], [1, 0.5], [2, 0.5]])


def test_samples_series_and_symmetry():
    rows = coupling_samples(CouplingSpec.series(1), 3)
    np.testing.assert_allclose(rows, [[0, 0], [0.5, 2], [1, 0]], atol=1e-15)
    rows = coupling_samples(CouplingSpec.series(3), 101)
    np.testing.assert_array_equal(rows[:, 1], rows[::-1, 1])


def test_samples_need_two_points():
    with pytest.raises(ValueError):
        coupling_samples(CouplingSpec.constant(), 1)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.label)
def test_json_round_trip(spec):
    data = json.loads(json.dumps(spec.to_dict()))
    assert "a" not in data and "coefficients" not in data
    assert CouplingSpec.from_dict(data) == spec


def test_unknown_shape_rejected():
    with pytest.raises(ValueError):
        CouplingSpec.from_dict({"shape": "gaussian", "T": 1})
