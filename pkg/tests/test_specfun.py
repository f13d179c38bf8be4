import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hankelmult import specfun as sf
from hankelmult.errors import DomainError, InputError

mp.mp.dps = 40
ORDERS = [-0.4, 0.0, 0.5, 1.0, 2.3, 7.0]


def _envelope_rel(value, nu, z):
    """Error of J relative to max(|J|, sqrt(2/(pi z))) so zeros are not penalised."""
    ref = mp.besselj(nu, mp.mpf(z))
    scale = max(abs(ref), mp.sqrt(2 / (mp.pi * z)) if z > abs(nu) else abs(ref))
    return float(abs(value - ref) / scale)


# ---------------------------------------------------------------- examples

def test_j_small_argument_leading_term():
    assert abs(sf.bessel_j(0.0, 1e-8) - 1.0) <= 1e-15


def test_j_half_integer_closed_form():
    assert sf.bessel_j(0.5, math.pi / 2) == pytest.approx(2 / math.pi, rel=1e-13)


def test_j0_first_zero():
    assert abs(sf.bessel_j(0.0, 2.404825557695773)) <= 1e-10


def test_j_scaled_examples():
    assert sf.bessel_j_scaled(0.0, 0.0) == 1.0
    assert sf.bessel_j_scaled(0.5, 0.0) == pytest.approx(math.sqrt(2 / math.pi), rel=1e-14)
    assert sf.bessel_j_scaled(1.0, 1.0) == pytest.approx(float(mp.besselj(1, 1)), rel=1e-14)


def test_i_scaled_examples():
    assert sf.bessel_i_scaled(0.0, 0.0) == 1.0
    assert sf.bessel_i_scaled(0.5, 1.0) == pytest.approx(math.sinh(1) * math.sqrt(2 / math.pi), rel=1e-14)
    assert sf.bessel_i_scaled(0.0, 2.0) == pytest.approx(float(mp.besseli(0, 2)), rel=1e-14)


def test_i_exp_scaled_examples():
    assert sf.bessel_i_exp_scaled(0.0, 0.0) == 1.0
    z = 1e4
    assert math.sqrt(2 * math.pi * z) * sf.bessel_i_exp_scaled(0.0, z) == pytest.approx(1.0, abs=1e-4)
    ref = mp.besseli(1.5, 50) * mp.e ** (-50)
    assert sf.bessel_i_exp_scaled(1.5, 50.0) == pytest.approx(float(ref), rel=1e-10)


def test_i_exp_scaled_no_overflow():
    z = np.array([1e3, 1e5, 1e6])
    val = sf.bessel_i_exp_scaled(2.3, z)
    assert np.all(np.isfinite(val)) and np.all(val > 0)
    ref = [float(mp.besseli(2.3, v) * mp.e ** (-v)) for v in z]
    np.testing.assert_allclose(val, ref, rtol=1e-12)


def test_asym_coeffs_examples():
    assert sf.asym_coeffs(3.7, 1)[0] == 1.0
    assert sf.asym_coeffs(0.5, 2)[1] == 0.0
    assert sf.asym_coeffs(0.0, 2)[1] == -0.25


def test_asym_coeffs_product_formula():
    for nu in ORDERS:
        terms = sf.asym_coeffs(nu, 12)
        for k in range(12):
            prod = mp.mpf(1)
            for j in range(1, k + 1):
                prod *= 4 * mp.mpf(nu) ** 2 - (2 * j - 1) ** 2
            ref = prod / (4**k * mp.factorial(k))
            assert abs(terms[k] - float(ref)) <= 1e-14 * max(1.0, abs(float(ref)))


def test_errors():
    with pytest.raises(DomainError):
        sf.bessel_j(-1.0, 1.0)
    with pytest.raises(DomainError):
        sf.asym_coeffs(0.0, 0)
    with pytest.raises(InputError):
        sf.bessel_j(0.0, float("nan"))
    with pytest.raises(InputError):
        sf.bessel_j(0.0, 0.0)
    with pytest.raises(InputError):
        sf.bessel_i_scaled(0.0, -1.0)


# ---------------------------------------------------------------- accuracy sweeps

@pytest.mark.parametrize("nu", ORDERS + [-0.9])
def test_j_accuracy_against_mpmath(nu):
    zs = np.concatenate([np.geomspace(1e-6, 50, 120), np.linspace(50.5, 400, 60)])
    vals = sf.bessel_j(nu, zs)
    for z, v in zip(zs, vals):
        tol = 1e-12 if z <= 50 else 1e-9
        assert _envelope_rel(v, nu, z) <= tol, (nu, z)


@pytest.mark.parametrize("nu", ORDERS + [-0.9])
def test_i_accuracy_against_mpmath(nu):
    zs = np.concatenate([[0.0], np.geomspace(1e-6, 400, 150)])
    scaled = sf.bessel_i_scaled_exp(nu, zs)
    diff = sf.bessel_i_diff_scaled_exp(nu, zs[1:])
    for z, v in zip(zs, scaled):
        zr = mp.mpf(float(z))
        ref = 1 / (2**mp.mpf(nu) * mp.gamma(nu + 1)) if z == 0 else zr ** (-nu) * mp.e ** (-zr) * mp.besseli(nu, zr)
        assert abs(v - float(ref)) <= 1e-13 * float(ref)
    for z, v in zip(zs[1:], diff):
        zr = mp.mpf(float(z))
        ref = zr ** (-nu) * mp.e ** (-zr) * (mp.besseli(nu, zr) - mp.besseli(nu + 1, zr))
        assert abs(v - float(ref)) <= 1e-11 * abs(float(ref))


def test_i_asymptotic_truncation_beyond_30():
    for nu in ORDERS:
        terms = sf.asym_coeffs(nu, 12)
        for z in [30.0, 45.0, 120.0, 900.0]:
            series = sum((-1) ** k * terms[k] * (2 * z) ** (-k) for k in range(12))
            approx = series / math.sqrt(2 * math.pi * z)
            if z < nu * nu:
                continue
            assert sf.bessel_i_exp_scaled(nu, z) == pytest.approx(approx, rel=1e-10)


# ---------------------------------------------------------------- invariants

@pytest.mark.parametrize("nu", ORDERS)
def test_regime_overlap_window(nu):
    # J: Miller band vs asymptotic expansion around the upper crossover
    cross_j = max(25.0, nu * nu)
    z = np.linspace(0.8 * cross_j, 1.2 * cross_j, 41)
    miller = sf._j_miller_scaled(nu, z) * z**nu
    asym = sf._j_asymptotic(nu, z)
    envelope = np.sqrt(2 / (np.pi * z))
    assert np.max(np.abs(miller - asym) / envelope) <= 1e-9
    # J: series vs Miller around the lower crossover
    z = np.linspace(6.4, 9.6, 33)
    assert np.max(np.abs(sf._j_series_scaled(nu, z) - sf._j_miller_scaled(nu, z)) * z**nu / envelope.max()) <= 1e-9
    # I: exp-scaled series vs asymptotic
    cross_i = max(30.0, nu * nu)
    z = np.linspace(0.8 * cross_i, 1.2 * cross_i, 41)
    series = sf._i_series_scaled_exp(nu, z)
    asym = z ** (-nu) / np.sqrt(2 * np.pi * z) * sf._i_asym_sum(sf.asym_coeffs(nu, 12), z)
    assert np.max(np.abs(series - asym) / series) <= 1e-9


def _fd4(fun, z, h):
    return (-fun(z + 2 * h) + 8 * fun(z + h) - 8 * fun(z - h) + fun(z - 2 * h)) / (12 * h)


def test_derivative_identities_random():
    rng = np.random.default_rng(1234)
    for _ in range(100):
        nu = rng.uniform(-0.95, 6.0)
        z = rng.uniform(0.05, 60.0)
        h = 1e-3 * max(1.0, z) ** 0.5
        h = min(h, z / 4)
        # (z^-nu J_nu)' = -z^-nu J_{nu+1}
        dj = _fd4(lambda s: sf.bessel_j_scaled(nu, s), z, h)
        rhs_j = -z * sf.bessel_j_scaled(nu + 1, z)
        scale_j = max(abs(rhs_j), z ** (-nu) * math.sqrt(2 / (math.pi * z)))
        assert abs(dj - rhs_j) <= 1e-6 * scale_j, (nu, z)
        # (z^-nu I_nu)' = z^-nu I_{nu+1}, checked in exp-scaled form
        di = _fd4(lambda s: sf.bessel_i_scaled_exp(nu, s) * math.exp(s - z), z, h)
        rhs_i = z * sf.bessel_i_scaled_exp(nu + 1, z)
        assert abs(di - rhs_i) <= 1e-6 * abs(rhs_i), (nu, z)


@settings(max_examples=200, deadline=None)
@given(nu=st.floats(-0.99, 10.0), z=st.floats(1e-8, 1e4))
def test_i_positive(nu, z):
    assert sf.bessel_i_exp_scaled(nu, z) > 0
    assert sf.bessel_i_scaled_exp(nu, z) > 0


@pytest.mark.parametrize("nu", ORDERS)
def test_small_argument_limits(nu):
    norm = 2**nu * math.gamma(nu + 1)
    consts = []
    for z in [1e-3, 5e-4]:
        cj = (sf.bessel_j_scaled(nu, z) * norm - 1) / z**2
        ci = (sf.bessel_i_scaled(nu, z) * norm - 1) / z**2
        consts.append((cj, ci))
    # fitted constants equal -/+ 1/(4(nu+1)) and are stable under halving z
    for cj, ci in consts:
        assert cj == pytest.approx(-1 / (4 * (nu + 1)), rel=1e-3)
        assert ci == pytest.approx(1 / (4 * (nu + 1)), rel=1e-3)
    assert consts[0][0] == pytest.approx(consts[1][0], rel=1e-3)


def test_array_and_scalar_shapes():
    z = np.linspace(0.1, 60, 12).reshape(3, 4)
    assert sf.bessel_j(1.0, z).shape == (3, 4)
    assert isinstance(sf.bessel_j(1.0, 2.0), float)
    np.testing.assert_allclose(sf.bessel_j(1.0, z)[1, 2], sf.bessel_j(1.0, z[1, 2]), rtol=1e-15)
