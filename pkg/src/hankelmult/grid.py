"""Weighted tensor grids on (0, inf)^n and functions sampled on them.

The measure on each axis is ``x**(2 lam) dx``.  An axis is a composite
rule made of panels:

* ``[0, first]`` with Gauss-Jacobi nodes for the weight ``x**(2 lam)``,
* geometric panels (ratio 2) from ``first`` up to ``width``,
* uniform panels of length about ``width`` up to ``upper``.

Every panel carries ``panel_order`` nodes, so each axis also provides
piecewise-polynomial interpolation, differentiation and partial-interval
integration operators that later modules reuse.
"""
from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .errors import DomainError, GridMismatchError, InputError

__all__ = [
    "Order",
    "Axis",
    "WeightedGrid",
    "GridFunction",
    "DyadicCube",
    "integrate",
    "lp_norm",
    "weak_l1_profile",
    "cube_of",
    "cube_measure",
    "atomic_write",
]


# --------------------------------------------------------------------------
# orders
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Order:
    """Bessel parameters ``(lam_1, ..., lam_n)``, each greater than -1/2."""

    lambdas: tuple

    def __post_init__(self):
        lams = tuple(float(v) for v in np.atleast_1d(self.lambdas))
        if not lams:
            raise DomainError("an order needs at least one parameter")
        for lam in lams:
            if not math.isfinite(lam) or lam <= -0.5:
                raise DomainError(f"λ must exceed −1/2 (got {lam})")
        object.__setattr__(self, "lambdas", lams)

    @classmethod
    def of(cls, value) -> "Order":
        return value if isinstance(value, Order) else cls(value)

    @property
    def n(self) -> int:
        return len(self.lambdas)

    @property
    def nus(self) -> tuple:
        """Bessel orders ``lam - 1/2`` attached to each axis."""
        return tuple(lam - 0.5 for lam in self.lambdas)


# --------------------------------------------------------------------------
# one axis
# --------------------------------------------------------------------------

def _bary_weights(nodes):
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def _lagrange_rows(nodes, bary, points):
    """Rows of Lagrange basis values at ``points`` for one panel."""
    diff = points[:, None] - nodes[None, :]
    exact = diff == 0.0
    diff[exact] = 1.0
    terms = bary[None, :] / diff
    rows = terms / terms.sum(axis=1, keepdims=True)
    hit = exact.any(axis=1)
    if np.any(hit):
        rows[hit] = exact[hit].astype(float)
    return rows


def _panel_edges(lower, upper, first, width, ratio=2.0):
    edges = [lower]
    if lower == 0.0:
        edges.append(min(first, upper))
    cur = edges[-1]
    while cur < upper and cur * (ratio - 1.0) < width:
        nxt = min(cur * ratio, upper)
        if upper - nxt < 0.25 * (nxt - cur):
            nxt = upper
        edges.append(nxt)
        cur = nxt
    if cur < upper:
        count = max(1, int(math.ceil((upper - cur) / width - 1e-9)))
        edges.extend(np.linspace(cur, upper, count + 1)[1:].tolist())
    return np.array(edges)


class Axis:
    """Composite quadrature rule on ``[lower, upper]`` for ``x**(2 lam) dx``.

    Parameters
    ----------
    lam : float
        Weight exponent parameter (> -1/2).
    upper : float
        Right end of the truncated axis.
    lower : float, optional
        Left end; 0 gives a Gauss-Jacobi first panel.
    panel_order : int
        Nodes per panel.
    width : float
        Target length of the uniform panels.
    first : float
        Right end of the panel touching 0.
    edges : array_like, optional
        Explicit panel edges, overriding the automatic layout.
    """

    def __init__(self, lam, upper=16.0, lower=0.0, panel_order=10, width=0.5,
                 first=2.0**-7, edges=None):
        lam = Order((lam,)).lambdas[0]
        if not (0.0 <= lower < upper):
            raise DomainError("axis bounds must satisfy 0 <= lower < upper")
        if panel_order < 2:
            raise DomainError("panel_order must be at least 2")
        self.lam = lam
        self.lower = float(lower)
        self.upper = float(upper)
        self.panel_order = m = int(panel_order)
        self.width = float(width)
        self.first = float(first)
        if edges is None:
            edges = _panel_edges(self.lower, self.upper, self.first, self.width)
        self.edges = np.asarray(edges, dtype=float)
        if self.edges[0] != self.lower or self.edges[-1] != self.upper or np.any(np.diff(self.edges) <= 0):
            raise DomainError("panel edges must increase from lower to upper")

        gl_x, gl_w = roots_legendre(m)
        self._gl_sub = roots_legendre(2 * m)
        nodes, base, weights = [], [], []
        self.jacobi_first = self.lower == 0.0
        for p, (a, b) in enumerate(zip(self.edges[:-1], self.edges[1:])):
            if p == 0 and self.jacobi_first:
                s, w = roots_jacobi(m, 0.0, 2.0 * lam)
                x = 0.5 * b * (1.0 + s)
                comb = w * (0.5 * b) ** (2.0 * lam + 1.0)
                nodes.append(x)
                weights.append(comb)
                base.append(comb / x ** (2.0 * lam))
            else:
                x = 0.5 * (a + b) + 0.5 * (b - a) * gl_x
                bw = 0.5 * (b - a) * gl_w
                nodes.append(x)
                base.append(bw)
                weights.append(bw * x ** (2.0 * lam))
        self.nodes = np.concatenate(nodes)
        self.base_weights = np.concatenate(base)
        self.weights = np.concatenate(weights)
        self.panel_nodes = nodes
        self._bary = [_bary_weights(x) for x in nodes]
        # monomial moments for the panel touching 0
        if self.jacobi_first:
            u = nodes[0] / self.edges[1]
            self._first_inv_vander = np.linalg.inv(np.vander(u, m, increasing=True))
        self._diff = None

    # ------------------------------------------------------------------
    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def panel_count(self) -> int:
        return self.edges.size - 1

    def panel_slice(self, p) -> slice:
        m = self.panel_order
        return slice(p * m, (p + 1) * m)

    def refined(self, factor=2) -> "Axis":
        """Same layout with every panel split into ``factor`` equal pieces."""
        edges = [self.edges[0]]
        for a, b in zip(self.edges[:-1], self.edges[1:]):
            edges.extend(np.linspace(a, b, factor + 1)[1:].tolist())
        return Axis(self.lam, self.upper, self.lower, self.panel_order, edges=np.array(edges))

    def with_lambda(self, lam) -> "Axis":
        """The same nodes layout for a different weight exponent."""
        return Axis(lam, self.upper, self.lower, self.panel_order, edges=self.edges)

    def same_layout(self, other: "Axis") -> bool:
        return (self.panel_order == other.panel_order and self.edges.size == other.edges.size
                and np.array_equal(self.edges, other.edges) and self.lam == other.lam)

    # ------------------------------------------------------------------
    def interpolation_matrix(self, points) -> np.ndarray:
        """Matrix mapping nodal values to values at ``points``.

        Points outside ``[lower, upper]`` get a zero row: sampled functions
        are treated as vanishing outside the truncated axis.
        """
        pts = np.asarray(points, dtype=float).reshape(-1)
        out = np.zeros((pts.size, self.size))
        panel = np.clip(np.searchsorted(self.edges, pts, side="right") - 1, 0, self.panel_count - 1)
        inside = (pts >= self.lower) & (pts <= self.upper)
        for p in np.unique(panel[inside]):
            rows = np.nonzero(inside & (panel == p))[0]
            out[np.ix_(rows, np.arange(self.panel_slice(p).start, self.panel_slice(p).stop))] = \
                _lagrange_rows(self.panel_nodes[p], self._bary[p], pts[rows])
        return out

    def diff_matrices(self):
        """Block-diagonal first and second derivative matrices (per panel)."""
        if self._diff is None:
            n = self.size
            d1 = np.zeros((n, n))
            d2 = np.zeros((n, n))
            for p in range(self.panel_count):
                x = self.panel_nodes[p]
                w = self._bary[p]
                diff = x[:, None] - x[None, :]
                np.fill_diagonal(diff, 1.0)
                blk = (w[None, :] / w[:, None]) / diff
                np.fill_diagonal(blk, 0.0)
                np.fill_diagonal(blk, -blk.sum(axis=1))
                sl = self.panel_slice(p)
                d1[sl, sl] = blk
                d2[sl, sl] = blk @ blk
            self._diff = (d1, d2)
        return self._diff

    def _first_panel_moments(self, lo, hi, power):
        # integrals of u^j y^power over [lo, hi] (y = c u) for j < m, then basis rows
        c = self.edges[1]
        m = self.panel_order
        ul, uh = lo / c, hi / c
        mom = np.empty(m)
        for j in range(m):
            e = j + power + 1.0
            if abs(e) < 1e-14:
                mom[j] = math.log(uh / ul)
            else:
                mom[j] = (uh**e - ul**e) / e
        return c ** (power + 1.0) * (mom @ self._first_inv_vander)

    def _panel_piece(self, p, lo, hi, power):
        if p == 0 and self.jacobi_first:
            return self._first_panel_moments(lo, hi, power)
        s, w = self._gl_sub
        y = 0.5 * (lo + hi) + 0.5 * (hi - lo) * s
        wy = 0.5 * (hi - lo) * w * y**power
        return wy @ _lagrange_rows(self.panel_nodes[p], self._bary[p], y)

    def integral_matrix(self, lo, hi, power=None) -> np.ndarray:
        """Rows ``r`` with ``sum_k M[r, k] g(x_k) ~ int_{lo_r}^{hi_r} g(y) y**power dy``.

        ``power`` defaults to ``2 lam``.  Limits are clipped to the axis;
        an empty interval gives a zero row.  The panel touching 0 is
        integrated through exact monomial moments, so singular weights
        such as ``1/y`` are handled as long as ``lo > 0``.
        """
        power = 2.0 * self.lam if power is None else float(power)
        lo = np.clip(np.broadcast_to(np.asarray(lo, float), np.shape(hi)).reshape(-1), self.lower, self.upper)
        hi = np.clip(np.asarray(hi, float).reshape(-1), self.lower, self.upper)
        out = np.zeros((lo.size, self.size))
        full = self.base_weights * self.nodes**power
        for r in range(lo.size):
            a, b = lo[r], hi[r]
            if b <= a:
                continue
            pa = min(np.searchsorted(self.edges, a, side="right") - 1, self.panel_count - 1)
            pb = min(np.searchsorted(self.edges, b, side="left") - 1, self.panel_count - 1)
            pb = max(pb, pa)
            for p in (pa, pb) if pb > pa else (pa,):
                left = max(a, self.edges[p])
                right = min(b, self.edges[p + 1])
                if right > left:
                    out[r, self.panel_slice(p)] += self._panel_piece(p, left, right, power)
            if pb > pa + 1:
                sl = slice(self.panel_slice(pa + 1).start, self.panel_slice(pb - 1).stop)
                out[r, sl] += full[sl]
        return out


# --------------------------------------------------------------------------
# tensor grids and sampled functions
# --------------------------------------------------------------------------

class WeightedGrid:
    """Tensor product of :class:`Axis` rules carrying ``prod x_j**(2 lam_j) dx``."""

    def __init__(self, axes: Sequence[Axis]):
        self.axes = tuple(axes)
        if not self.axes:
            raise DomainError("a grid needs at least one axis")
        self.order = Order(tuple(ax.lam for ax in self.axes))
        self.shape = tuple(ax.size for ax in self.axes)
        w = self.axes[0].weights
        for ax in self.axes[1:]:
            w = np.multiply.outer(w, ax.weights)
        self.weights = w

    @classmethod
    def build(cls, order, upper=16.0, lower=0.0, panel_order=10, width=0.5, first=2.0**-7):
        """Grid with the same layout on every axis of ``order``."""
        order = Order.of(order)
        uppers = np.broadcast_to(np.asarray(upper, float), (order.n,))
        lowers = np.broadcast_to(np.asarray(lower, float), (order.n,))
        return cls([Axis(lam, u, lo, panel_order, width, first)
                    for lam, u, lo in zip(order.lambdas, uppers, lowers)])

    @property
    def n(self) -> int:
        return len(self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def bounds(self):
        return [(ax.lower, ax.upper) for ax in self.axes]

    def mesh(self):
        """Coordinate arrays of shape ``self.shape`` (``ij`` indexing)."""
        return np.meshgrid(*[ax.nodes for ax in self.axes], indexing="ij")

    def points(self) -> np.ndarray:
        """All nodes as an array of shape ``(size, n)`` in C order."""
        return np.stack([c.reshape(-1) for c in self.mesh()], axis=1)

    def refined(self, factor=2) -> "WeightedGrid":
        return WeightedGrid([ax.refined(factor) for ax in self.axes])

    def with_order(self, order) -> "WeightedGrid":
        order = Order.of(order)
        if order.n != self.n:
            raise GridMismatchError("order dimension differs from the grid")
        return WeightedGrid([ax.with_lambda(lam) for ax, lam in zip(self.axes, order.lambdas)])

    def same_as(self, other: "WeightedGrid") -> bool:
        return other is self or (self.n == other.n and all(a.same_layout(b) for a, b in zip(self.axes, other.axes)))

    def sample(self, fun: Callable) -> "GridFunction":
        """Evaluate ``fun(x_1, ..., x_n)`` on the mesh (broadcast arrays)."""
        vals = np.broadcast_to(np.asarray(fun(*self.mesh())), self.shape)
        return GridFunction(self, vals)

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.shape))


def _apply_axis(mat, values, axis):
    """Contract ``mat`` (new, old) with ``values`` along ``axis``."""
    moved = np.moveaxis(values, axis, 0)
    out = np.tensordot(mat, moved, axes=(1, 0))
    return np.moveaxis(out, 0, axis)


@dataclass(frozen=True)
class GridFunction:
    """Complex samples of a function at every node of a grid."""

    grid: WeightedGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.shape != self.grid.shape:
            if vals.size != self.grid.size:
                raise GridMismatchError(f"{vals.size} values for a grid of {self.grid.size} nodes")
            vals = vals.reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise InputError("grid function values must be finite")
        if not np.iscomplexobj(vals):
            vals = vals.astype(float)
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    # arithmetic ------------------------------------------------------------
    def _other(self, other):
        if isinstance(other, GridFunction):
            if not self.grid.same_as(other.grid):
                raise GridMismatchError("grid functions live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return GridFunction(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - self._other(other))

    def __mul__(self, other):
        return GridFunction(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def abs(self) -> "GridFunction":
        return GridFunction(self.grid, np.abs(self.values))

    def map(self, fun) -> "GridFunction":
        return GridFunction(self.grid, fun(self.values))

    def along_axis(self, mat, axis) -> np.ndarray:
        return _apply_axis(mat, self.values, axis)

    def __call__(self, *coords):
        """Piecewise-polynomial interpolant at points (zero outside the box)."""
        pts = np.broadcast_arrays(*[np.asarray(c, float) for c in coords])
        shape = pts[0].shape
        flat = [p.reshape(-1) for p in pts]
        mats = [ax.interpolation_matrix(c) for ax, c in zip(self.grid.axes, flat)]
        # evaluate sum over nodes of prod_j L_j(point, node_j) f(node)
        vals = self.values
        out = np.tensordot(mats[0], vals, axes=(1, 0))  # (P, rest...)
        for j in range(1, len(mats)):
            out = np.einsum("pk,pk...->p...", mats[j], out)
        return out.reshape(shape)

    # CSV -------------------------------------------------------------------
    def to_csv(self, path) -> None:
        """Write columns ``x_1..x_n, re, im`` with 17 significant digits."""
        pts = self.grid.points()
        vals = self.values.reshape(-1)
        header = [f"x_{j + 1}" for j in range(self.grid.n)] + ["re", "im"]

        def rows():
            for p, v in zip(pts, vals):
                yield [f"{c:.17g}" for c in p] + [f"{complex(v).real:.17g}", f"{complex(v).imag:.17g}"]

        atomic_write(path, header, rows())

    @classmethod
    def from_csv(cls, path, grid: WeightedGrid) -> "GridFunction":
        """Read a CSV written by :meth:`to_csv` onto ``grid`` (coordinates checked)."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            expected = [f"x_{j + 1}" for j in range(grid.n)] + ["re", "im"]
            if header != expected:
                raise GridMismatchError(f"unexpected CSV header {header}")
            data = np.array([[float(v) for v in row] for row in reader])
        if data.shape[0] != grid.size:
            raise GridMismatchError("CSV row count does not match the grid")
        if not np.allclose(data[:, : grid.n], grid.points(), rtol=1e-15, atol=0):
            raise GridMismatchError("CSV coordinates do not match the grid nodes")
        vals = data[:, grid.n] + 1j * data[:, grid.n + 1]
        if np.all(data[:, grid.n + 1] == 0):
            vals = vals.real
        return cls(grid, vals.reshape(grid.shape))


def atomic_write(path, header, rows) -> None:
    """Write a CSV file atomically (temporary file then rename)."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# functionals
# --------------------------------------------------------------------------

def integrate(f: GridFunction) -> complex:
    """Integral of ``f`` against the weighted measure of its grid."""
    if not isinstance(f, GridFunction):
        raise GridMismatchError("integrate expects a GridFunction")
    total = np.sum(f.values * f.grid.weights)
    return complex(total) if np.iscomplexobj(total) else float(total)


def lp_norm(f: GridFunction, p=2.0) -> float:
    """``(int |f|^p dm)^(1/p)``; ``p = inf`` gives the nodal maximum."""
    p = float(p)
    if p < 1:
        raise DomainError("p must be at least 1")
    mag = np.abs(f.values)
    if math.isinf(p):
        return float(mag.max())
    return float(np.sum(mag**p * f.grid.weights) ** (1.0 / p))


def weak_l1_profile(f: GridFunction, gammas) -> list:
    """Pairs ``(gamma, gamma * m{|f| > gamma})`` for ascending ``gammas``.

    The superlevel measure sums the weights of nodes where ``|f| > gamma``.
    """
    gammas = [float(g) for g in gammas]
    if not gammas:
        raise InputError("gamma list is empty")
    if any(g <= 0 for g in gammas) or any(b < a for a, b in zip(gammas, gammas[1:])):
        raise InputError("gammas must be positive and ascending")
    mag = np.abs(f.values).reshape(-1)
    w = f.grid.weights.reshape(-1)
    order = np.argsort(mag)
    sorted_mag = mag[order]
    # tail sums give m{|f| > gamma}, monotone by construction
    tail = np.concatenate([np.cumsum(w[order][::-1])[::-1], [0.0]])
    out = []
    for g in gammas:
        idx = np.searchsorted(sorted_mag, g, side="right")
        out.append((g, g * float(tail[idx])))
    return out


@dataclass(frozen=True)
class DyadicCube:
    """``Q_j = prod [2**j_i, 2**(j_i+1))``; the enlarged cube triples each side."""

    j: tuple

    def __post_init__(self):
        object.__setattr__(self, "j", tuple(int(v) for v in self.j))

    def contains(self, x) -> bool:
        x = np.asarray(x, float)
        lo = 2.0 ** np.array(self.j)
        return bool(np.all((x >= lo) & (x < 2 * lo)))

    def enlarged_contains(self, y) -> bool:
        y = np.asarray(y, float)
        lo = 2.0 ** np.array(self.j)
        return bool(np.all((y >= lo / 2) & (y < 4 * lo)))


def cube_of(x) -> DyadicCube:
    """The dyadic cube containing the point ``x``."""
    x = np.atleast_1d(np.asarray(x, float))
    if np.any(~np.isfinite(x)) or np.any(x <= 0):
        raise DomainError("dyadic cubes need positive coordinates")
    j = np.floor(np.log2(x)).astype(int)
    # guard against rounding in log2 near exact powers of two
    j = np.where(2.0**j > x, j - 1, j)
    j = np.where(2.0 ** (j + 1) <= x, j + 1, j)
    return DyadicCube(tuple(j))


def cube_measure(cube: DyadicCube, order) -> float:
    """Weighted measure ``prod (2**((j+1)(2lam+1)) - 2**(j(2lam+1)))/(2lam+1)``."""
    order = Order.of(order)
    if order.n != len(cube.j):
        raise GridMismatchError("cube and order dimensions differ")
    total = 1.0
    for j, lam in zip(cube.j, order.lambdas):
        e = 2.0 * lam + 1.0
        total *= (2.0 ** ((j + 1) * e) - 2.0 ** (j * e)) / e
    return total
