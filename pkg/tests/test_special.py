import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from landmarkloc.analytics import disk_distance_pdf
from landmarkloc.special import (
    QuadratureError,
    QuadratureSpec,
    integrate_1d,
    log_binom,
    log_factorial,
    log_lower_incomplete_gamma_int,
    lower_incomplete_gamma_int,
    normal_cdf,
    upper_incomplete_gamma_int,
)


def _log_gamma_lower_ref(v, x):
    """(v-1)! (1 - e^-x sum_{k<v} x^k / k!) at 1500 digits, as (sign, log|value|).

    The finite sum cancels catastrophically for small |x| and large v, so the
    working precision has to cover log10((v-1)!) plus the result's exponent.
    """
    with mpmath.workdps(1500):
        x = mpmath.mpf(x)
        tail = mpmath.fsum(x**k / mpmath.factorial(k) for k in range(v))
        val = mpmath.factorial(v - 1) * (1 - mpmath.exp(-x) * tail)
        return int(mpmath.sign(val)), float(mpmath.log(abs(val)))


def test_normal_cdf_examples():
    assert normal_cdf(0.0) == 0.5
    assert abs(normal_cdf(40.0) - 1.0) <= 1e-15
    # erf-based reference value
    assert abs(normal_cdf(1.0) - 0.8413447460685429) <= 1e-15


@given(st.floats(-30, 30))
def test_normal_cdf_reflection(z):
    assert abs(normal_cdf(z) + normal_cdf(-z) - 1.0) <= 1e-15


def test_normal_cdf_monotone():
    z = np.linspace(-12, 12, 20001)
    assert np.all(np.diff(normal_cdf(z)) >= 0)


def test_lower_gamma_examples():
    assert math.isclose(lower_incomplete_gamma_int(1, -2.0), 1 - math.e**2, rel_tol=1e-14)
    assert lower_incomplete_gamma_int(3, 0.0) == 0.0


def test_lower_gamma_against_panel_integration():
    # signed integral of t^4 e^-t from 0 to -10 by a 10^6-panel Simpson rule
    n = 1_000_000
    t = np.linspace(0.0, -10.0, n + 1)
    f = t**4 * np.exp(-t)
    h = -10.0 / n
    simpson = h / 3 * (f[0] + f[-1] + 4 * f[1:-1:2].sum() + 2 * f[2:-1:2].sum())
    assert math.isclose(lower_incomplete_gamma_int(5, -10.0), simpson, rel_tol=1e-10)


@pytest.mark.parametrize("v", [1, 2, 7, 30, 90, 200])
@pytest.mark.parametrize("x", [-500.0, -73.5, -5.0, -0.25, 0.5, 12.0, 150.0, 500.0])
def test_lower_gamma_relative_accuracy(v, x):
    sign, logmag = _log_gamma_lower_ref(v, x)
    got_sign, got_log = log_lower_incomplete_gamma_int(v, x)
    assert got_sign == sign
    # relative error of the value is the absolute error of its logarithm
    assert abs(got_log - logmag) <= 1e-12


@pytest.mark.parametrize("v", [1, 3, 10, 40])
@pytest.mark.parametrize("x", [-20.0, -1.0, 0.0, 2.0, 35.0])
def test_gamma_complement_identity(v, x):
    lo, up = lower_incomplete_gamma_int(v, x), upper_incomplete_gamma_int(v, x)
    # for x < 0 both parts can dwarf (v-1)!, so measure against the larger part
    scale = max(abs(lo), abs(up), math.factorial(v - 1))
    assert abs(lo + up - math.factorial(v - 1)) <= 1e-10 * scale


def test_lower_gamma_rejects_bad_shape():
    with pytest.raises(ValueError):
        lower_incomplete_gamma_int(0, 1.0)


def test_log_factorial_and_binom():
    assert log_factorial(0) == 0.0
    assert math.isclose(log_factorial(100), math.lgamma(101))
    assert math.isclose(math.exp(log_binom(40, 13)), math.comb(40, 13), rel_tol=1e-12)
    assert log_binom(5, 7) == -math.inf
    with pytest.raises(ValueError):
        log_factorial(-1)


def test_integrate_constant():
    assert integrate_1d(lambda x: 1.0, 0.0, 2.0) == pytest.approx(2.0, abs=1e-14)


def test_integrate_disk_pdf_normalized_and_mean():
    total = integrate_1d(lambda s: disk_distance_pdf(s, 1.0), 0.0, 2.0, vectorized=True)
    assert abs(total - 1.0) <= 1e-9
    mean = integrate_1d(lambda s: s * disk_distance_pdf(s, 1.0), 0.0, 2.0, vectorized=True)
    assert abs(mean - 128 / (45 * math.pi)) <= 1e-9


@pytest.mark.parametrize(
    "f, a, b, exact",
    [
        (np.sin, 0.0, math.pi, 2.0),
        (np.exp, -1.0, 3.0, math.e**3 - math.exp(-1)),
        (lambda x: 1.0 / (1.0 + x * x), -50.0, 50.0, 2 * math.atan(50.0)),
        (np.sqrt, 0.0, 1.0, 2.0 / 3.0),
        (lambda x: np.abs(x - 0.3), 0.0, 1.0, 0.29),
        (lambda x: np.log(x), 1e-12, 1.0, -1.0 + 1e-12 - 1e-12 * math.log(1e-12)),
    ],
)
def test_integrate_error_estimate_bounds_true_error(f, a, b, exact):
    val, err = integrate_1d(f, a, b, QuadratureSpec(1e-11, 1e-11, 60), vectorized=True, return_error=True)
    assert abs(val - exact) <= max(err, 1e-13)


def test_integrate_reports_nonconvergence():
    spec = QuadratureSpec(abs_tol=1e-15, rel_tol=1e-15, max_depth=2)
    with pytest.raises(QuadratureError, match="failed to converge") as info:
        integrate_1d(lambda x: np.sign(x - 0.123456789), 0.0, 1.0, spec, vectorized=True)
    assert math.isfinite(info.value.error)


def test_integrate_rejects_reversed_limits():
    with pytest.raises(ValueError):
        integrate_1d(np.sin, 1.0, 0.0, vectorized=True)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 6), st.floats(-3, 3), st.floats(0.01, 4))
def test_integrate_polynomials_exact(k, a, width):
    b = a + width
    exact = (b ** (k + 1) - a ** (k + 1)) / (k + 1)
    assert integrate_1d(lambda x: x**k, a, b, vectorized=True) == pytest.approx(exact, rel=1e-10, abs=1e-12)
