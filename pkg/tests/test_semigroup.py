import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.special import gamma, ive

from hankelmult.errors import DomainError
from hankelmult.grid import WeightedGrid, lp_norm
from hankelmult.hankel import TransformPlan, hankel_apply
from hankelmult.inputs import gaussian_bump
from hankelmult.semigroup import (
    EuclideanHeatKernel,
    HeatKernelParams,
    dt_heat_kernel,
    euclidean_kernel,
    far_field_dt_ratio,
    far_field_ratio,
    heat_kernel,
    heat_kernel_spectral_residual,
    local_deviation_ratio,
    semigroup_apply,
)

mp.mp.dps = 30


def _mp_heat(lam, t, u, v):
    nu = mp.mpf(lam) - mp.mpf(1) / 2
    t, u, v = mp.mpf(t), mp.mpf(u), mp.mpf(v)
    return (u * v) ** (-nu) / (2 * t) * mp.besseli(nu, u * v / (2 * t)) * mp.e ** (-(u * u + v * v) / (4 * t))


# ---------------------------------------------------------------- heat kernel values

def test_heat_kernel_example():
    val = heat_kernel(HeatKernelParams([0.5], 0.25), 1.0, 1.0)
    assert val == pytest.approx(2 * ive(0, 2.0), rel=1e-14)
    assert val == pytest.approx(0.6170166, abs=1e-7)


@pytest.mark.parametrize("lam", [-0.4, 0.0, 1.0, 2.3])
def test_heat_kernel_vs_mpmath(lam):
    rng = np.random.default_rng(3)
    for _ in range(10):
        t = float(np.exp(rng.uniform(np.log(1e-3), np.log(50))))
        u, v = rng.uniform(0.05, 10, size=2)
        ref = float(_mp_heat(lam, t, u, v))
        if ref > 1e-250:
            assert heat_kernel(HeatKernelParams([lam], t), u, v) == pytest.approx(ref, rel=1e-11)


def test_heat_kernel_small_argument_limit():
    for lam in (-0.4, 0.5, 1.0, 2.3):
        t, x = 0.7, 1.3
        limit = (2 * t) ** (-lam - 0.5) * math.exp(-x * x / (4 * t)) / (2 ** (lam - 0.5) * gamma(lam + 0.5))
        assert heat_kernel(HeatKernelParams([lam], t), x, 1e-8) == pytest.approx(limit, rel=1e-8)


@settings(max_examples=60, deadline=None)
@given(st.floats(-0.45, 4), st.floats(1e-3, 50), st.floats(1e-3, 20), st.floats(1e-3, 20))
def test_heat_kernel_symmetric_and_positive(lam, t, u, v):
    p = HeatKernelParams([lam], t)
    a, b = heat_kernel(p, u, v), heat_kernel(p, v, u)
    assert a == b
    assert a >= 0
    if (u - v) ** 2 / (4 * t) < 600:
        assert a > 0


def test_heat_kernel_product_rule_dimension_two():
    p = HeatKernelParams([0.3, 1.1], 0.4)
    x, y = np.array([1.0, 2.0]), np.array([1.5, 0.7])
    expected = heat_kernel(HeatKernelParams([0.3], 0.4), 1.0, 1.5) * heat_kernel(HeatKernelParams([1.1], 0.4), 2.0, 0.7)
    assert heat_kernel(p, x, y) == pytest.approx(expected, rel=1e-15)


def test_heat_kernel_rejects_bad_inputs():
    with pytest.raises(DomainError):
        HeatKernelParams([0.5], 0.0)
    with pytest.raises(DomainError):
        heat_kernel(HeatKernelParams([0.5], 1.0), -1.0, 1.0)


# ---------------------------------------------------------------- spectral identity

def test_spectral_residual_examples():
    assert heat_kernel_spectral_residual(HeatKernelParams([1.0], 0.5), 1.0, 2.0) <= 1e-8
    assert heat_kernel_spectral_residual(HeatKernelParams([0.5], 0.1), 1.0, 1.0) <= 1e-7
    assert heat_kernel_spectral_residual(HeatKernelParams([1.0], 10.0), 1.0, 2.0) <= 1e-8


# ---------------------------------------------------------------- time derivative

def test_dt_finite_difference():
    p = HeatKernelParams([1.0], 0.3)
    h = 1e-5
    fd = (heat_kernel(HeatKernelParams([1.0], 0.3 + h), 1.0, 1.2)
          - heat_kernel(HeatKernelParams([1.0], 0.3 - h), 1.0, 1.2)) / (2 * h)
    assert dt_heat_kernel(p, 1.0, 1.2) == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("lam", [-0.4, 0.0, 0.5, 2.3])
def test_dt_vs_mpmath_derivative(lam):
    for t, u, v in ((0.05, 1.0, 1.1), (2.0, 0.3, 4.0), (30.0, 5.0, 6.0)):
        ref = float(mp.diff(lambda s: _mp_heat(lam, s, u, v), t))
        assert dt_heat_kernel(HeatKernelParams([lam], t), u, v) == pytest.approx(ref, rel=1e-9)


def test_dt_fundamental_theorem():
    lam, u, v = 0.8, 1.0, 1.7
    integral, _ = quad(lambda s: dt_heat_kernel(HeatKernelParams([lam], s), u, v), 0.1, 2.0,
                       epsabs=0, epsrel=1e-12, limit=200)
    diff = heat_kernel(HeatKernelParams([lam], 2.0), u, v) - heat_kernel(HeatKernelParams([lam], 0.1), u, v)
    assert abs(integral - diff) <= 1e-8


def test_dt_negative_on_diagonal_small_t():
    for lam in (-0.4, 0.5, 2.0):
        assert dt_heat_kernel(HeatKernelParams([lam], 0.01), 1.0, 1.0) < 0


def test_dt_leibniz_dimension_two():
    order, t, h = [0.3, 1.1], 0.4, 1e-5
    x, y = np.array([1.0, 2.0]), np.array([1.5, 0.7])
    fd = (heat_kernel(HeatKernelParams(order, t + h), x, y) - heat_kernel(HeatKernelParams(order, t - h), x, y)) / (2 * h)
    assert dt_heat_kernel(HeatKernelParams(order, t), x, y) == pytest.approx(fd, rel=1e-7)


# ---------------------------------------------------------------- semigroup on grids

@pytest.mark.parametrize("lam", [-0.4, 0.0, 1.0, 2.3])
def test_mass_conservation(lam):
    g = WeightedGrid.build([lam], upper=24.0)
    out = semigroup_apply(HeatKernelParams([lam], 0.5), g.sample(lambda x: np.ones_like(x)))
    x = g.axes[0].nodes
    sel = x <= 12.0
    assert np.max(np.abs(out.values[sel] - 1.0)) <= 1e-6


def test_semigroup_law():
    g = WeightedGrid.build([1.0])
    f = g.sample(lambda x: np.exp(-x * x))
    two = semigroup_apply(HeatKernelParams([1.0], 0.25), semigroup_apply(HeatKernelParams([1.0], 0.25), f))
    one = semigroup_apply(HeatKernelParams([1.0], 0.5), f)
    assert lp_norm(two - one, 2) / lp_norm(f, 2) <= 1e-6


@pytest.mark.parametrize("order", [[0.5], [-0.4], [0.2, 1.5]])
def test_spectral_consistency(order):
    g = WeightedGrid.build(order)
    plan = TransformPlan(g)
    f = gaussian_bump(order).sample(g)
    t = 0.3
    decay = g.sample(lambda *c: np.exp(-t * sum(ci * ci for ci in c)))
    spectral = hankel_apply(plan, hankel_apply(plan, f) * decay)
    direct = semigroup_apply(HeatKernelParams(order, t), f)
    assert lp_norm(direct - spectral, 2) / lp_norm(f, 2) <= 1e-6


def test_contraction():
    g = WeightedGrid.build([0.7])
    f = gaussian_bump([0.7]).sample(g)
    for t in (0.01, 0.5, 5.0):
        assert lp_norm(semigroup_apply(HeatKernelParams([0.7], t), f), 2) <= lp_norm(f, 2) * (1 + 1e-8)


# ---------------------------------------------------------------- Euclidean kernel

def test_euclidean_peak():
    assert euclidean_kernel(0.25, 1.0, 1.0).value == pytest.approx(1 / math.sqrt(math.pi), rel=1e-15)


def test_euclidean_derivatives_vs_fd():
    t, x, y, h = 0.3, np.array([1.0, 0.4]), np.array([1.3, 0.1]), 1e-6
    ev = euclidean_kernel(t, x, y)
    fd_t = (euclidean_kernel(t + h, x, y).value - euclidean_kernel(t - h, x, y).value) / (2 * h)
    assert ev.dt == pytest.approx(fd_t, rel=1e-8)
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (euclidean_kernel(t, x + e, y).value - euclidean_kernel(t, x - e, y).value) / (2 * h)
        assert ev.grad[j] == pytest.approx(fd, rel=1e-7)
        e[j] = 1e-4
        fd2 = (euclidean_kernel(t, x + e, y).value - 2 * ev.value + euclidean_kernel(t, x - e, y).value) / 1e-8
        assert ev.hess_diag[j] == pytest.approx(fd2, rel=1e-6)


def test_euclidean_normalisation():
    total, _ = quad(lambda s: float(euclidean_kernel(0.7, 0.0, s).value), -np.inf, np.inf, epsabs=0, epsrel=1e-13)
    assert total == pytest.approx(1.0, abs=1e-10)


def test_euclidean_rejects_bad_time():
    with pytest.raises(DomainError):
        EuclideanHeatKernel(0.0, 1)


# ---------------------------------------------------------------- envelope ratios

def _regime_samples(n, seed, local):
    rng = np.random.default_rng(seed)
    chunks, total = [], 0
    while total < n:
        u, v = np.exp(rng.uniform(np.log(0.05), np.log(20), (2, 4 * n)))
        t = np.exp(rng.uniform(np.log(1e-3), np.log(1e2), 4 * n))
        keep = (u * v / t > 1) if local else (2 * u < v)
        chunks.append((u[keep], v[keep], t[keep]))
        total += keep.sum()
    return [np.concatenate(c)[:n] for c in zip(*chunks)]


@pytest.mark.parametrize("lam", [-0.4, 0.0, 1.0, 2.3])
def test_envelope_ratios_match_direct_evaluation(lam):
    u, v, t = _regime_samples(200, 5, local=False)
    for ui, vi, ti in zip(u[:20], v[:20], t[:20]):
        p = HeatKernelParams([lam], ti)
        w = heat_kernel(p, ui, vi)
        env = ti ** (-lam - 0.5) * math.exp(-vi * vi / (20 * ti))
        if w > 1e-280 and env > 1e-280:
            assert far_field_ratio(lam, ti, ui, vi) == pytest.approx(w / env, rel=1e-10)
            assert far_field_dt_ratio(lam, ti, ui, vi) == pytest.approx(
                abs(dt_heat_kernel(p, ui, vi)) / (env / ti), rel=1e-9)


@pytest.mark.parametrize("lam", [-0.4, 0.0, 0.5, 1.0, 2.3])
def test_envelope_sups_stable(lam):
    sups = []
    for n, seed in ((10_000, 1), (20_000, 2)):
        u, v, t = _regime_samples(n, seed, local=True)
        a = np.max(local_deviation_ratio(lam, t, u, v))
        u, v, t = _regime_samples(n, seed, local=False)
        sups.append((a, np.max(far_field_ratio(lam, t, u, v)), np.max(far_field_dt_ratio(lam, t, u, v))))
    sups = np.array(sups)
    assert np.all(np.isfinite(sups))
    assert np.all(np.abs(sups[1] / sups[0] - 1) <= 0.10)
