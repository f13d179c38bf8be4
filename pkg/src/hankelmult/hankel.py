"""Hankel transform on (0, inf)^n and the Bessel operator.

The transform kernel on each axis is ``(x y)**(-nu) J_nu(x y)`` with
``nu = lam - 1/2``; it is evaluated through :func:`bessel_j_scaled` so no
quotient of large numbers is formed near ``x y = 0``.  Transforms are
dense matrix contractions axis by axis.  The frequency grid equals the
source grid, which makes ``h(h(f))`` directly comparable with ``f``.
"""
from __future__ import annotations

import numpy as np

from .errors import GridMismatchError, InputError
from .grid import GridFunction, Order, WeightedGrid, lp_norm
from .specfun import bessel_j_scaled

__all__ = [
    "TransformPlan",
    "hankel_apply",
    "self_inverse_residual",
    "plancherel_residual",
    "bessel_operator_apply",
    "hankel_kernel",
]


def hankel_kernel(order, x, y):
    """``prod_j (x_j y_j)**(-nu_j) J_nu_j(x_j y_j)`` for points ``x`` and ``y``."""
    order = Order.of(order)
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    out = 1.0
    for j, nu in enumerate(order.nus):
        out = out * bessel_j_scaled(nu, x[..., j] * y[..., j])
    return out


class TransformPlan:
    """Precomputed per-axis kernel matrices for one grid.

    Entry ``(i, k)`` of the matrix for axis ``j`` is
    ``(x_i y_k)**(-nu_j) J_nu_j(x_i y_k) * w_k`` where ``w_k`` is the
    weighted quadrature weight of frequency/source node ``k``.
    """

    def __init__(self, grid: WeightedGrid):
        self.grid = grid
        self.order = grid.order
        self.matrices = []
        for ax, nu in zip(grid.axes, self.order.nus):
            arg = np.multiply.outer(ax.nodes, ax.nodes)
            kern = bessel_j_scaled(nu, arg)
            self.matrices.append(kern * ax.weights[None, :])

    @property
    def source_grid(self) -> WeightedGrid:
        return self.grid

    @property
    def frequency_grid(self) -> WeightedGrid:
        return self.grid

    def _check(self, f: GridFunction):
        if not isinstance(f, GridFunction) or not self.grid.same_as(f.grid):
            raise GridMismatchError("function does not live on the plan's grid")


def hankel_apply(plan: TransformPlan, f: GridFunction) -> GridFunction:
    """``h(f)`` sampled on the frequency grid of ``plan``."""
    plan._check(f)
    vals = f.values
    for axis, mat in enumerate(plan.matrices):
        vals = np.moveaxis(np.tensordot(mat, np.moveaxis(vals, axis, 0), axes=(1, 0)), 0, axis)
    if not np.all(np.isfinite(vals)):
        raise InputError("non-finite transform values (truncation failure)")
    return GridFunction(plan.frequency_grid, vals)


def self_inverse_residual(plan: TransformPlan, f: GridFunction) -> float:
    """``||h(h(f)) - f||_2 / ||f||_2`` (0 for the zero function)."""
    norm = lp_norm(f, 2)
    if norm == 0.0:
        return 0.0
    back = hankel_apply(plan, hankel_apply(plan, f))
    return lp_norm(back - f, 2) / norm


def plancherel_residual(plan: TransformPlan, f: GridFunction, g: GridFunction) -> float:
    """``|int h(f) h(g) dm - int f g dm| / (||f||_2 ||g||_2)``."""
    nf, ng = lp_norm(f, 2), lp_norm(g, 2)
    if nf == 0.0 or ng == 0.0:
        return 0.0
    hf, hg = hankel_apply(plan, f), hankel_apply(plan, g)
    lhs = np.sum(hf.values * hg.values * plan.grid.weights)
    rhs = np.sum(f.values * g.values * f.grid.weights)
    return float(abs(lhs - rhs) / (nf * ng))


def bessel_operator_apply(order, f: GridFunction) -> GridFunction:
    """``sum_j -(d^2/dx_j^2 + (2 lam_j / x_j) d/dx_j) f``.

    Derivatives use collocation on each panel's nodes (a local stencil of
    ``panel_order`` points), so no stencil ever crosses a panel edge or the
    ends of the axis.  ``f`` should be smooth inside every panel.
    """
    order = Order.of(order)
    if order != f.grid.order:
        raise GridMismatchError("order does not match the grid")
    out = np.zeros(f.grid.shape, dtype=f.values.dtype)
    for axis, (ax, lam) in enumerate(zip(f.grid.axes, order.lambdas)):
        if ax.panel_order < 4:
            raise GridMismatchError("panel order too small for second derivatives")
        d1, d2 = ax.diff_matrices()
        op = d2 + (2.0 * lam / ax.nodes)[:, None] * d1
        out -= f.along_axis(op, axis)
    return GridFunction(f.grid, out)
