"""Bessel heat kernel, its time derivative and the Euclidean heat kernel.

With ``nu = lam - 1/2`` and ``z = u v / (2t)`` the one-dimensional kernel
is written as

    W_t(u, v) = (2t)**(-nu-1) * G(nu, z) * exp(-(u - v)**2 / (4t)),

where ``G(nu, z) = z**(-nu) exp(-z) I_nu(z)``.  The two exponentials of the
textbook formula are merged into ``exp(-(u-v)^2/4t)`` before evaluation,
so the kernel neither overflows for large ``uv/t`` nor underflows early
for small ``t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConvergenceError, DomainError, GridMismatchError
from .grid import Axis, GridFunction, Order, WeightedGrid
from .specfun import bessel_i_diff_scaled_exp, bessel_i_scaled_exp, bessel_j_scaled

__all__ = [
    "HeatKernelParams",
    "EuclideanHeatKernel",
    "heat_kernel_1d",
    "dt_heat_kernel_1d",
    "heat_kernel",
    "dt_heat_kernel",
    "heat_kernel_spectral_residual",
    "semigroup_apply",
    "euclidean_kernel",
    "local_deviation_ratio",
    "far_field_ratio",
    "far_field_dt_ratio",
]


@dataclass(frozen=True)
class HeatKernelParams:
    """Order of the Bessel operator together with a time ``t > 0``."""

    order: Order
    t: float

    def __post_init__(self):
        object.__setattr__(self, "order", Order.of(self.order))
        t = float(self.t)
        if not math.isfinite(t) or t <= 0:
            raise DomainError("time must be positive")
        object.__setattr__(self, "t", t)


def _points(order, x):
    arr = np.asarray(x, float)
    if order.n == 1 and (arr.ndim == 0 or arr.shape[-1] != 1):
        arr = arr[..., None]
    if arr.shape[-1] != order.n:
        raise GridMismatchError("point dimension differs from the order")
    if np.any(arr <= 0):
        raise DomainError("points must lie in (0, inf)^n")
    return arr


def _scalar(out):
    return float(out) if np.ndim(out) == 0 else out


def heat_kernel_1d(lam, t, u, v):
    """One-dimensional kernel ``W_t^lam(u, v)`` (vectorised in ``t, u, v``)."""
    nu = lam - 0.5
    t = np.asarray(t, float)
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    z = u * v / (2.0 * t)
    return (2.0 * t) ** (-nu - 1.0) * bessel_i_scaled_exp(nu, z) * np.exp(-((u - v) ** 2) / (4.0 * t))


def dt_heat_kernel_1d(lam, t, u, v):
    """Closed-form ``d/dt W_t^lam(u, v)``.

    Differentiating the merged form gives

        (2t)**(-nu-1) e^{-d^2/4t} [G (d^2/4t^2 - (nu+1)/t) + (z/t) D],

    with ``d = u - v`` and ``D = z**(-nu) e^{-z} (I_nu - I_{nu+1})``.  This
    is the three-term bracket (``I_{lam-1/2}`` and ``I_{lam+1/2}``) after the
    exponentials are combined.
    """
    nu = lam - 0.5
    t = np.asarray(t, float)
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    z = u * v / (2.0 * t)
    d2 = (u - v) ** 2
    g = bessel_i_scaled_exp(nu, z)
    dd = bessel_i_diff_scaled_exp(nu, z)
    bracket = g * (d2 / (4.0 * t * t) - (nu + 1.0) / t) + (z / t) * dd
    return (2.0 * t) ** (-nu - 1.0) * np.exp(-d2 / (4.0 * t)) * bracket


def heat_kernel(params: HeatKernelParams, x, y):
    """Product kernel ``prod_j W_t^{lam_j}(x_j, y_j)``; points broadcast."""
    order = params.order
    x, y = _points(order, x), _points(order, y)
    out = 1.0
    for j, lam in enumerate(order.lambdas):
        out = out * heat_kernel_1d(lam, params.t, x[..., j], y[..., j])
    return _scalar(out)


def dt_heat_kernel(params: HeatKernelParams, x, y):
    """``d/dt`` of the product kernel, assembled with the Leibniz rule."""
    order = params.order
    x, y = _points(order, x), _points(order, y)
    vals = [heat_kernel_1d(lam, params.t, x[..., j], y[..., j]) for j, lam in enumerate(order.lambdas)]
    ders = [dt_heat_kernel_1d(lam, params.t, x[..., j], y[..., j]) for j, lam in enumerate(order.lambdas)]
    total = 0.0
    for i in range(order.n):
        term = ders[i]
        for j in range(order.n):
            if j != i:
                term = term * vals[j]
        total = total + term
    return _scalar(total)


def heat_kernel_spectral_residual(params: HeatKernelParams, x, y, rtol=1e-12) -> float:
    """Relative gap between the spectral integral and the closed-form kernel.

    The integral ``int_0^inf e^{-t z^2} K(zx) K(zy) z^{2 lam} dz`` with
    ``K(s) = s**(-nu) J_nu(s)`` is computed with a composite rule truncated
    where ``e^{-t z^2} < 1e-18``; the rule is refined once and the two
    results must agree to ``rtol`` (relative to the integrand's mass),
    otherwise :class:`ConvergenceError` is raised.
    """
    order = params.order
    if order.n != 1:
        raise GridMismatchError("the spectral residual is a one-dimensional check")
    lam = order.lambdas[0]
    nu = lam - 0.5
    t = params.t
    x = float(np.asarray(x, float).reshape(-1)[0])
    y = float(np.asarray(y, float).reshape(-1)[0])
    if x <= 0 or y <= 0:
        raise DomainError("points must be positive")
    top = math.sqrt(41.5 / t)
    freq = max(x, y, 1.0)
    width = min(1.0, 2.0 / freq)

    def run(axis):
        z = axis.nodes
        vals = np.exp(-t * z * z) * bessel_j_scaled(nu, z * x) * bessel_j_scaled(nu, z * y)
        return float(np.sum(vals * axis.weights)), float(np.sum(np.abs(vals) * axis.weights))

    axis = Axis(lam, upper=top, panel_order=16, width=width, first=min(0.5, top / 4))
    coarse, _ = run(axis)
    fine, mass = run(axis.refined(2))
    if abs(fine - coarse) > rtol * mass:
        raise ConvergenceError("spectral heat-kernel quadrature did not converge")
    closed = heat_kernel_1d(lam, t, x, y)
    return abs(fine - closed) / closed


def semigroup_apply(params: HeatKernelParams, f: GridFunction) -> GridFunction:
    """``W_t f(x) = int prod_j W_t(x_j, y_j) f(y) dm(y)`` on the grid of ``f``."""
    if params.order != f.grid.order:
        raise GridMismatchError("kernel order differs from the grid order")
    vals = f.values
    for axis, (ax, lam) in enumerate(zip(f.grid.axes, params.order.lambdas)):
        mat = heat_kernel_1d(lam, params.t, ax.nodes[:, None], ax.nodes[None, :]) * ax.weights[None, :]
        vals = np.moveaxis(np.tensordot(mat, np.moveaxis(vals, axis, 0), axes=(1, 0)), 0, axis)
    return GridFunction(f.grid, vals)


# --------------------------------------------------------------------------
# Euclidean heat kernel
# --------------------------------------------------------------------------

class EuclideanValues(NamedTuple):
    value: np.ndarray
    dt: np.ndarray
    grad: np.ndarray
    hess_diag: np.ndarray


@dataclass(frozen=True)
class EuclideanHeatKernel:
    """``prod_j exp(-(x_j - y_j)^2 / 4t) / (2 sqrt(pi t))`` in ``n`` dimensions."""

    t: float
    n: int

    def __post_init__(self):
        if not (float(self.t) > 0):
            raise DomainError("time must be positive")
        if int(self.n) < 1:
            raise DomainError("dimension must be positive")

    def evaluate(self, x, y) -> EuclideanValues:
        """Value, ``d/dt``, gradient in ``x`` and diagonal second derivatives."""
        t, n = float(self.t), int(self.n)
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        if n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        if n == 1 and (y.ndim == 0 or y.shape[-1] != 1):
            y = y[..., None]
        d = x - y
        r2 = np.sum(d * d, axis=-1)
        val = np.exp(-r2 / (4.0 * t)) / (4.0 * math.pi * t) ** (n / 2.0)
        dt = val * (r2 / (4.0 * t * t) - n / (2.0 * t))
        grad = -val[..., None] * d / (2.0 * t)
        hess = val[..., None] * (d * d / (4.0 * t * t) - 1.0 / (2.0 * t))
        return EuclideanValues(val, dt, grad, hess)


def euclidean_kernel(t, x, y) -> EuclideanValues:
    """Euclidean heat kernel and its closed-form derivatives at ``(x, y)``."""
    x = np.asarray(x, float)
    n = 1 if x.ndim == 0 else x.shape[-1]
    return EuclideanHeatKernel(float(t), n).evaluate(x, y)


# --------------------------------------------------------------------------
# envelope ratios used by the regime-bound studies
# --------------------------------------------------------------------------

def local_deviation_ratio(lam, t, u, v):
    """``|W - (uv)^{-lam} E| / ((uv)^{-lam-1} sqrt(t) e^{-(u-v)^2/4t})`` for ``uv/t > 1``.

    ``E`` is the one-dimensional Euclidean kernel.  Both sides are divided
    by the Gaussian factor analytically, so the ratio stays finite for far
    separated points.
    """
    nu = lam - 0.5
    u, v, t = (np.asarray(a, float) for a in (u, v, t))
    z = u * v / (2.0 * t)
    # W e^{(u-v)^2/4t} = (2t)^{-nu-1} G(nu, z); the Euclidean part is (uv)^-lam / sqrt(4 pi t)
    w_scaled = (2.0 * t) ** (-nu - 1.0) * bessel_i_scaled_exp(nu, z)
    e_scaled = (u * v) ** (-lam) / np.sqrt(4.0 * math.pi * t)
    return np.abs(w_scaled - e_scaled) / ((u * v) ** (-lam - 1.0) * np.sqrt(t))


def far_field_ratio(lam, t, u, v):
    """``|W_t(u, v)| t^{lam+1/2} e^{v^2/20t}`` on ``2u < v``."""
    nu = lam - 0.5
    u, v, t = (np.asarray(a, float) for a in (u, v, t))
    z = u * v / (2.0 * t)
    expo = -((u - v) ** 2) / (4.0 * t) + v * v / (20.0 * t)
    return 2.0 ** (-nu - 1.0) * bessel_i_scaled_exp(nu, z) * np.exp(expo)


def far_field_dt_ratio(lam, t, u, v):
    """``|d/dt W_t(u, v)| t^{lam+3/2} e^{v^2/20t}`` on ``2u < v``."""
    nu = lam - 0.5
    u, v, t = (np.asarray(a, float) for a in (u, v, t))
    z = u * v / (2.0 * t)
    d2 = (u - v) ** 2
    bracket = bessel_i_scaled_exp(nu, z) * (d2 / (4.0 * t) - (nu + 1.0)) + z * bessel_i_diff_scaled_exp(nu, z)
    expo = -d2 / (4.0 * t) + v * v / (20.0 * t)
    return 2.0 ** (-nu - 1.0) * np.abs(bracket) * np.exp(expo)
