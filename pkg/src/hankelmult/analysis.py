"""Comparison and maximal operators, and the L^p / weak-(1,1) harness.

The singular-integral operators (``T*``, global, local difference and the
local Euclidean maximal operator) are evaluated from one sweep over the
same quadrature nodes around every output point, so the pointwise
decomposition

    T* f <= G|f| + L|f| + T*_loc f

holds on computed values up to rounding.  The positive operators (Hardy,
averaging, tail, Gaussian maximal, Hardy-Littlewood) act on grid
functions through per-axis integration matrices.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, GridMismatchError, InputError
from .grid import Axis, GridFunction, Order, WeightedGrid, atomic_write, lp_norm, weak_l1_profile
from .hankel import TransformPlan
from .inputs import InputFunction, make_input
from .multiplier import (
    LaplaceSymbol,
    PairKernels,
    PVConfig,
    alpha_epsilon,
    spectral_apply,
    support_of,
    sweep_points,
    symbol_from_preset,
    _evaluate_f,
    _extrapolate,
)

__all__ = [
    "MAXIMAL_EPS",
    "RegionSpec",
    "in_local_region",
    "SweepResult",
    "operator_sweep",
    "global_operator_apply",
    "local_diff_operator_apply",
    "maximal_truncated_apply",
    "t_loc_star_apply",
    "hardy_apply",
    "iterated_hardy_apply",
    "tensor_hardy_apply",
    "gaussian_maximal_apply",
    "averaging_apply",
    "tail_operator_apply",
    "hl_maximal",
    "graded_edges",
    "graded_grid",
    "closed_form",
    "OperatorReport",
    "lp_ratio_experiment",
    "weak11_experiment",
    "weak_constant",
    "resolve_operator",
    "OPERATOR_NAMES",
]

# dyadic truncation radii from the domain scale down to below the grid spacing
MAXIMAL_EPS = tuple(8.0 * 2.0**-k for k in range(0, 16))


def in_local_region(x, y):
    """True iff ``x_j/2 < y_j < 2 x_j`` for every coordinate (vectorised)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("points must lie in (0, inf)^n")
    inside = np.all((y > x / 2) & (y < 2 * x), axis=-1) if x.ndim or y.ndim else (x / 2 < y < 2 * x)
    return bool(inside) if np.ndim(inside) == 0 else inside


@dataclass(frozen=True)
class RegionSpec:
    """Local region around ``center`` or its complement in (0, inf)^n."""

    center: tuple
    kind: str = "local"

    def __post_init__(self):
        if self.kind not in ("local", "global"):
            raise InputError("region kind must be 'local' or 'global'")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))

    def contains(self, y):
        local = in_local_region(np.asarray(self.center), y)
        return local if self.kind == "local" else np.logical_not(local)


# --------------------------------------------------------------------------
# singular-integral operators
# --------------------------------------------------------------------------

@dataclass
class SweepResult:
    """Operators computed from one node sweep, all on ``grid``.

    Attributes
    ----------
    maximal : GridFunction
        ``sup_eps |int_{|y-x|>eps} f K dm|`` over the schedule.
    global_part : GridFunction
        ``int_{outside L(x)} |f| |K| dm``.
    local_diff : GridFunction
        ``int_{L(x)} |f| |K - prod (x_j y_j)^{-lam_j} H| dm``.
    local_maximal : GridFunction
        ``sup_eps |int_{L(x), |y-x|>eps} f prod (x_j y_j)^{-lam_j} H dm|``.
    multiplier : GridFunction
        Principal value ``T f`` (boundary term plus extrapolation).
    truncations : ndarray
        Truncated integrals ``(points, len(eps))``.
    """

    grid: WeightedGrid
    eps: tuple
    maximal: GridFunction
    global_part: GridFunction
    local_diff: GridFunction
    local_maximal: GridFunction
    multiplier: GridFunction
    truncations: np.ndarray


def _absolute(f):
    if isinstance(f, GridFunction):
        return f.abs()
    if isinstance(f, InputFunction):
        return InputFunction(lambda *c: np.abs(f(*c)), f.support, f.breaks, f"|{f.label}|", f.l1_mass)
    return lambda *c: np.abs(f(*c))


def operator_sweep(sym: LaplaceSymbol, order, f, grid: WeightedGrid = None, eps_schedule=MAXIMAL_EPS,
                   cfg: PVConfig = None) -> SweepResult:
    """Evaluate ``T*``, ``G|f|``, ``L|f|``, ``T*_loc`` and ``T f`` together.

    ``f`` is a :class:`GridFunction` or a callable with ``support`` and
    ``breaks`` attributes; ``grid`` gives the output nodes (defaults to
    ``f.grid``).
    """
    order = Order.of(order)
    eps = np.array(eps_schedule, float)
    if eps.size == 0:
        raise InputError("empty eps schedule")
    if eps.size > 1 and np.any(np.diff(eps) >= 0):
        raise InputError("eps schedule must be strictly decreasing")
    if grid is None:
        if not isinstance(f, GridFunction):
            raise InputError("an output grid is required for callable inputs")
        grid = f.grid
    if grid.n != order.n:
        raise GridMismatchError("grid dimension differs from the order")
    if cfg is None:
        cfg = PVConfig(tuple(eps) if eps.size >= 2 else (eps[0], eps[0] / 2))
    points = grid.points()
    P, K = points.shape[0], eps.size
    zero = np.zeros((P, K + 1), dtype=complex)
    if sym.is_constant:
        sums = {k: zero for k in ("K", "K_global_abs", "diff_local_abs", "H_local", "K_local")}
    else:
        eng = PairKernels(sym, order, cfg.time_width, cfg.time_nodes)
        box = support_of(f, grid)
        sums = None if box is None else sweep_points(f, order, points, eps, eng, cfg, want_local=True, box=box)
        if sums is None:
            sums = {k: zero for k in ("K", "K_global_abs", "diff_local_abs", "H_local", "K_local")}
    trunc = np.cumsum(sums["K"], axis=1)[:, :K]
    loc = np.cumsum(sums["H_local"], axis=1)[:, :K]
    shape = grid.shape
    maximal = np.max(np.abs(trunc), axis=1)
    glob = np.sum(sums["K_global_abs"].real, axis=1)
    diff = np.sum(sums["diff_local_abs"].real, axis=1)
    locmax = np.max(np.abs(loc), axis=1)
    fx = _evaluate_f(f, points).astype(complex)
    alphas = np.asarray(alpha_epsilon(sym, order.n, eps)).reshape(-1)
    pv = -(trunc + order.n * alphas[None, :] * fx[:, None])
    tm = _extrapolate(pv) if K >= 3 else pv[:, -1]
    return SweepResult(
        grid, tuple(eps),
        GridFunction(grid, maximal.reshape(shape)),
        GridFunction(grid, glob.reshape(shape)),
        GridFunction(grid, diff.reshape(shape)),
        GridFunction(grid, locmax.reshape(shape)),
        GridFunction(grid, tm.reshape(shape)),
        trunc,
    )


def global_operator_apply(sym, order, f, grid=None, eps_schedule=MAXIMAL_EPS, cfg=None) -> GridFunction:
    """``G|f|(x) = int_{(0,inf)^n minus L(x)} |f| |K| dm``."""
    return operator_sweep(sym, order, _absolute(f), grid, eps_schedule, cfg).global_part


def local_diff_operator_apply(sym, order, f, grid=None, eps_schedule=MAXIMAL_EPS, cfg=None) -> GridFunction:
    """``L|f|(x) = int_{L(x)} |f| |K - prod (x_j y_j)^{-lam_j} H| dm``."""
    return operator_sweep(sym, order, _absolute(f), grid, eps_schedule, cfg).local_diff


def maximal_truncated_apply(sym, order, f, eps_schedule=MAXIMAL_EPS, grid=None, cfg=None) -> GridFunction:
    """``sup_eps |int_{|y-x|>eps} f K dm|`` over a discrete schedule."""
    if len(tuple(eps_schedule)) == 0:
        raise InputError("empty eps schedule")
    return operator_sweep(sym, order, f, grid, eps_schedule, cfg).maximal


def t_loc_star_apply(sym, order, f, eps_schedule=MAXIMAL_EPS, grid=None, cfg=None) -> GridFunction:
    """Maximal truncations of the Euclidean comparison kernel over ``L(x)``."""
    if len(tuple(eps_schedule)) == 0:
        raise InputError("empty eps schedule")
    return operator_sweep(sym, order, f, grid, eps_schedule, cfg).local_maximal


# --------------------------------------------------------------------------
# positive operators on grid functions
# --------------------------------------------------------------------------

def _single_axis(g: GridFunction) -> Axis:
    if g.grid.n != 1:
        raise GridMismatchError("expected a one-dimensional grid function")
    return g.grid.axes[0]


def _check_beta(beta):
    beta = float(beta)
    if beta <= -0.5:
        raise DomainError("beta must exceed -1/2")
    return beta


def _tensor(g: GridFunction, mats, at=None):
    vals = g.values
    for axis, mat in enumerate(mats):
        vals = np.moveaxis(np.tensordot(mat, np.moveaxis(vals, axis, 0), axes=(1, 0)), 0, axis)
    return vals


def _targets(g, at):
    """Output coordinates per axis: grid nodes or the columns of ``at``."""
    if at is None:
        return [ax.nodes for ax in g.grid.axes]
    at = np.atleast_2d(np.asarray(at, float))
    if g.grid.n == 1 and at.shape[0] == 1 and at.shape[1] != 1:
        at = at.T
    return [at[:, j] for j in range(g.grid.n)]


def _finish(g, vals, coords, at):
    if at is None:
        return GridFunction(g.grid, vals)
    return vals


def hardy_apply(beta, g: GridFunction, at=None):
    """``H_beta g(x) = x^{-2 beta - 1} int_0^x g(y) y^{2 beta} dy``.

    Returns a grid function on ``g``'s grid, or an array of values at the
    points ``at`` when given.
    """
    beta = _check_beta(beta)
    ax = _single_axis(g)
    x = _targets(g, at)[0]
    mat = ax.integral_matrix(np.zeros_like(x), x, power=2 * beta) * (x ** (-2 * beta - 1))[:, None]
    return _finish(g, mat @ g.values, x, at)


def iterated_hardy_apply(betas, g: GridFunction, at=None):
    """``prod_j x_j^{-2 beta_j - 1} int_0^{x_1} ... int_0^{x_k} g prod y_j^{2 beta_j} dy``."""
    betas = [_check_beta(b) for b in np.atleast_1d(betas)]
    if len(betas) != g.grid.n:
        raise GridMismatchError("one beta per axis is required")
    xs = _targets(g, at)
    mats = [ax.integral_matrix(np.zeros_like(x), x, power=2 * b) * (x ** (-2 * b - 1))[:, None]
            for ax, b, x in zip(g.grid.axes, betas, xs)]
    return _finish(g, _apply(g, mats, at), xs, at)


def _apply(g, mats, at):
    if at is None:
        return _tensor(g, mats)
    # pointwise: sum_k prod_j M_j[p, k_j] g[k]
    out = np.tensordot(mats[0], g.values, axes=(1, 0))
    for j in range(1, len(mats)):
        out = np.einsum("pk,pk...->p...", mats[j], out)
    return out


def tensor_hardy_apply(betas, g: GridFunction, at=None):
    """``(sum x_j^2)^{-sum(beta_j + 1/2)} int_0^{x_1/2} ... int_0^{x_k/2} g prod y_j^{2 beta_j} dy``."""
    betas = [_check_beta(b) for b in np.atleast_1d(betas)]
    if len(betas) != g.grid.n:
        raise GridMismatchError("one beta per axis is required")
    xs = _targets(g, at)
    mats = [ax.integral_matrix(np.zeros_like(x), x / 2, power=2 * b) for ax, b, x in zip(g.grid.axes, betas, xs)]
    vals = _apply(g, mats, at)
    expo = -sum(b + 0.5 for b in betas)
    if at is None:
        r2 = sum(c * c for c in g.grid.mesh())
    else:
        r2 = sum(x * x for x in xs)
    return _finish(g, vals * r2**expo, xs, at)


def averaging_apply(betas, g: GridFunction, at=None):
    """``Z g(x) = prod x_j^{-2 beta_j - 1} int_{x_1/2}^{2 x_1} ... g prod y_j^{2 beta_j} dy``."""
    betas = [_check_beta(b) for b in np.atleast_1d(betas)]
    if len(betas) != g.grid.n:
        raise GridMismatchError("one beta per axis is required")
    xs = _targets(g, at)
    mats = [ax.integral_matrix(x / 2, 2 * x, power=2 * b) * (x ** (-2 * b - 1))[:, None]
            for ax, b, x in zip(g.grid.axes, betas, xs)]
    return _finish(g, _apply(g, mats, at), xs, at)


def tail_operator_apply(k, g: GridFunction, at=None):
    """``S_k g(x) = int_{2x_1}^inf ... int_{2x_k}^inf |g(y)| / (y_1 ... y_k) dy``."""
    if int(k) != g.grid.n:
        raise GridMismatchError("k must equal the grid dimension")
    xs = _targets(g, at)
    mats = [ax.integral_matrix(2 * x, np.full_like(x, ax.upper), power=-1.0) for ax, x in zip(g.grid.axes, xs)]
    return _finish(g.abs(), _apply(g.abs(), mats, at), xs, at)


def gaussian_maximal_apply(betas, g: GridFunction, ladder=None) -> GridFunction:
    """``sup_t |int_{L(x)} prod_j (x_j y_j)^{-beta_j} t^{-1/2} e^{-(x_j-y_j)^2/4t} g dm_beta|``.

    ``ladder`` defaults to 64 log-uniform times on [1e-4, 1e2].  The
    integral is the nodal quadrature of ``g``'s grid with the weight
    ``y^{2 beta}``, restricted to nodes in the local region.
    """
    betas = [_check_beta(b) for b in np.atleast_1d(betas)]
    if len(betas) != g.grid.n:
        raise GridMismatchError("one beta per axis is required")
    ladder = np.geomspace(1e-4, 1e2, 64) if ladder is None else np.asarray(ladder, float)
    if ladder.size == 0 or np.any(ladder <= 0):
        raise InputError("time ladder must be nonempty and positive")
    best = np.zeros(g.grid.shape)
    for t in ladder:
        mats = []
        for ax, b in zip(g.grid.axes, betas):
            x = ax.nodes[:, None]
            y = ax.nodes[None, :]
            local = (y > x / 2) & (y < 2 * x)
            w = ax.base_weights * ax.nodes ** (2 * b)
            kern = (x * y) ** (-b) * np.exp(-((x - y) ** 2) / (4 * t)) / math.sqrt(t)
            mats.append(np.where(local, kern, 0.0) * w[None, :])
        best = np.maximum(best, np.abs(_tensor(g, mats)))
    return GridFunction(g.grid, best)


def hl_maximal(g: GridFunction, radii=None) -> GridFunction:
    """Centered Hardy-Littlewood maximal function over cubes of half-side ``r``.

    ``g`` lives on an unweighted grid (``lam = 0`` on every axis); it is
    taken as 0 outside the grid box.  ``radii`` defaults to the dyadic
    ladder ``2^j``, ``j = -10 .. 5``.
    """
    if any(lam != 0 for lam in g.grid.order.lambdas):
        raise GridMismatchError("the Hardy-Littlewood operator needs an unweighted grid")
    radii = 2.0 ** np.arange(-10, 6) if radii is None else np.asarray(radii, float)
    if radii.size == 0 or np.any(radii <= 0):
        raise InputError("radius ladder must be nonempty and positive")
    mag = g.abs()
    best = np.zeros(g.grid.shape)
    for r in radii:
        mats = [ax.integral_matrix(ax.nodes - r, ax.nodes + r, power=0.0) / (2 * r) for ax in g.grid.axes]
        best = np.maximum(best, _tensor(mag, mats))
    return GridFunction(g.grid, best)


def closed_form(op_label: str, order, points) -> np.ndarray:
    """Analytic values of a comparison operator applied to ``chi_(0,1)^n``.

    Supported labels: ``hardy:BETA`` (n = 1), ``tensor-hardy:BETA``,
    ``averaging:BETA`` and ``tail``.
    """
    order = Order.of(order)
    pts = np.atleast_2d(np.asarray(points, float))
    if order.n == 1 and pts.shape[1] != 1:
        pts = pts.reshape(-1, 1)
    name, _, arg = str(op_label).partition(":")
    beta = float(arg) if arg else 0.0
    a = 2 * beta + 1
    if name == "hardy":
        x = pts[:, 0]
        return np.minimum(x, 1.0) ** a / a * x ** (-a)
    if name == "tensor-hardy":
        r2 = np.sum(pts * pts, axis=1)
        return r2 ** (-order.n * (beta + 0.5)) * np.prod(np.minimum(pts / 2, 1.0) ** a / a, axis=1)
    if name == "averaging":
        top = np.minimum(2 * pts, 1.0)
        bot = np.minimum(pts / 2, 1.0)
        return np.prod((top**a - bot**a) / a * pts ** (-a), axis=1)
    if name == "tail":
        return np.prod(np.log(np.maximum(1.0 / (2 * pts), 1.0)), axis=1)
    raise InputError(f"no closed form for operator {op_label!r}")


# --------------------------------------------------------------------------
# experiment harness
# --------------------------------------------------------------------------

@dataclass
class OperatorReport:
    """Table of norm ratios or weak-type constants across inputs and grids.

    Each row is ``{"input", "resolution", "value"}``; ``growing`` flags
    inputs whose value increases by more than ``growth_tol`` from the
    coarsest to the finest resolution.
    """

    operator: str
    p: object
    rows: list = field(default_factory=list)
    growing: dict = field(default_factory=dict)
    growth_tol: float = 0.25

    def __post_init__(self):
        for row in self.rows:
            v = row["value"]
            if not (math.isfinite(v) and v >= 0):
                raise InputError("report values must be finite and nonnegative")

    @property
    def p_label(self) -> str:
        return "weak" if self.p == "weak" else f"{float(self.p):g}"

    def add(self, input_label, resolution, value):
        value = float(value)
        if not (math.isfinite(value) and value >= 0):
            raise InputError("report values must be finite and nonnegative")
        self.rows.append({"input": input_label, "resolution": int(resolution), "value": value})

    def finalize(self) -> "OperatorReport":
        by_input = {}
        for row in self.rows:
            by_input.setdefault(row["input"], []).append((row["resolution"], row["value"]))
        self.growing = {}
        for label, vals in by_input.items():
            vals.sort()
            lo, hi = vals[0][1], vals[-1][1]
            self.growing[label] = bool(len(vals) >= 2 and hi > lo * (1 + self.growth_tol) + 1e-300)
        return self

    def values(self, input_label=None):
        return [r["value"] for r in self.rows if input_label is None or r["input"] == input_label]

    def spread(self) -> float:
        """``max/min - 1`` over all rows (0 for a single row)."""
        vals = self.values()
        return max(vals) / min(vals) - 1.0 if vals and min(vals) > 0 else float("inf")

    def to_json(self, path) -> None:
        payload = {"operator": self.operator, "p": self.p_label, "rows": self.rows,
                   "growing": self.growing}
        _atomic_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def to_csv(self, path) -> None:
        rows = ([self.operator, self.p_label, r["input"], r["resolution"], f"{r['value']:.17g}"] for r in self.rows)
        atomic_write(path, ["operator", "p_or_weak", "input", "resolution", "value"], rows)


def _atomic_text(path, text):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


OPERATOR_NAMES = (
    "spectral:SYMBOL", "pv:SYMBOL", "maximal:SYMBOL", "global:SYMBOL", "local-diff:SYMBOL",
    "t-loc-star:SYMBOL", "hardy:BETA", "tensor-hardy:BETA", "averaging:BETA", "tail",
    "gaussian-maximal:BETA", "hl",
)


def resolve_operator(label: str, order):
    """Map an operator label to ``apply(input, grid) -> GridFunction``.

    Singular-integral operators take the input as a callable (so
    discontinuities become quadrature breakpoints); the others sample it
    on the grid first.
    """
    order = Order.of(order)
    name, _, arg = str(label).partition(":")

    def sampled(fun):
        return lambda inp, grid: fun(_sample(inp, grid))

    if name == "spectral":
        sym = symbol_from_preset(arg)
        return lambda inp, grid: spectral_apply(sym, TransformPlan(grid), _sample(inp, grid))
    sweep_fields = {"pv": "multiplier", "maximal": "maximal", "global": "global_part",
                    "local-diff": "local_diff", "t-loc-star": "local_maximal"}
    if name in sweep_fields:
        sym = symbol_from_preset(arg)
        attr = sweep_fields[name]
        absolute = name in ("global", "local-diff")

        def run(inp, grid):
            src = _absolute(inp) if absolute else inp
            return getattr(operator_sweep(sym, order, src, grid), attr)

        return run
    if name in ("hardy", "tensor-hardy", "averaging", "gaussian-maximal"):
        beta = float(arg) if arg else 0.0
        betas = [beta] * order.n
        if name == "hardy":
            return sampled(lambda g: hardy_apply(beta, g))
        if name == "tensor-hardy":
            return sampled(lambda g: tensor_hardy_apply(betas, g))
        if name == "averaging":
            return sampled(lambda g: averaging_apply(betas, g))
        return sampled(lambda g: gaussian_maximal_apply(betas, g))
    if name == "tail":
        return sampled(lambda g: tail_operator_apply(order.n, g))
    if name == "hl":
        return sampled(hl_maximal)
    raise InputError(f"unknown operator {label!r}")


def _sample(inp, grid):
    if isinstance(inp, GridFunction):
        return inp
    return GridFunction(grid, np.asarray(inp(*grid.mesh()), dtype=float))


def graded_edges(lower, upper, center, side, ratio=2.0**0.5, reach=None, width=0.5, first=2.0**-7):
    """Panel edges refined geometrically around a small cube ``[c - s/2, c + s/2]``.

    The cube is split into four panels; outside it panels grow by
    ``ratio`` until they reach the uniform ``width`` (or distance
    ``reach``).  This resolves the ``1/|x - c|`` decay of singular
    integrals of near-atoms down to the scale of the cube.
    """
    from .grid import _panel_edges

    lo, hi = center - side / 2, center + side / 2
    pts = list(np.linspace(lo, hi, 5))
    d = side / 4
    reach = center / 2 if reach is None else reach
    while d < width and d < reach:
        pts.extend([lo - d, hi + d])
        d *= ratio
    base = _panel_edges(lower, upper, first, width)
    span_lo, span_hi = min(pts), max(pts)
    keep = [e for e in base if e < span_lo - 0.5 * width or e > span_hi + 0.5 * width or e in (lower, upper)]
    edges = np.unique(np.clip(np.array(keep + pts), lower, upper))
    return edges


def graded_grid(order, inp, panel_order=10, upper=16.0) -> WeightedGrid:
    """Output grid adapted to an input: graded near a near-atom, default otherwise."""
    order = Order.of(order)
    meta = getattr(inp, "meta", None) or {}
    if "side" not in meta:
        return WeightedGrid.build(order, upper=upper, panel_order=panel_order)
    axes = [Axis(lam, upper, panel_order=panel_order,
                 edges=graded_edges(0.0, upper, meta["center"], meta["side"]))
            for lam in order.lambdas]
    return WeightedGrid(axes)


def _grids(order, resolutions, base=None, inp=None):
    base = base or {}
    out = []
    for r in resolutions:
        if inp is not None and not base:
            out.append((int(r), graded_grid(order, inp, panel_order=int(r))))
        else:
            out.append((int(r), WeightedGrid.build(order, panel_order=int(r), **base)))
    return out


def lp_ratio_experiment(op_label, p, inputs, order=(1.0,), resolutions=(6, 10), grid_spec=None) -> OperatorReport:
    """``||T f||_p / ||f||_p`` for every input at every resolution.

    ``resolutions`` are Gauss-Legendre nodes per panel of the default
    panel layout; the input norm is the nodal norm of the sampled input.
    """
    order = Order.of(order)
    op = resolve_operator(op_label, order)
    report = OperatorReport(op_label, float(p))
    for name in inputs:
        inp = make_input(name, order) if isinstance(name, str) else name
        for res, grid in _grids(order, resolutions, grid_spec):
            tf = op(inp, grid)
            nf = lp_norm(_sample(inp, grid), p)
            report.add(inp.label, res, lp_norm(tf, p) / nf if nf > 0 else 0.0)
    return report.finalize()


def weak_constant(tf: GridFunction, l1_mass: float, gammas=None) -> float:
    """``sup_gamma gamma m{|Tf| > gamma} / ||f||_1`` over a log-spaced ladder."""
    if gammas is None:
        top = float(np.max(np.abs(tf.values)))
        if top == 0:
            return 0.0
        gammas = np.geomspace(top * 1e-6, top, 241)
    prof = weak_l1_profile(tf, gammas)
    return max(v for _, v in prof) / l1_mass


def weak11_experiment(op_label, inputs, order=(1.0,), resolutions=(6, 10), grid_spec=None) -> OperatorReport:
    """Weak-type constants ``sup_gamma gamma m{|T f| > gamma} / ||f||_1``.

    Near-atom inputs use their exact mass; other inputs the nodal norm.
    """
    order = Order.of(order)
    op = resolve_operator(op_label, order)
    report = OperatorReport(op_label, "weak")
    for name in inputs:
        inp = make_input(name, order) if isinstance(name, str) else name
        for res, grid in _grids(order, resolutions, grid_spec, inp):
            tf = op(inp, grid)
            mass = inp.l1_mass if getattr(inp, "l1_mass", None) else lp_norm(_sample(inp, grid), 1)
            report.add(inp.label, res, weak_constant(tf, mass) if mass > 0 else 0.0)
    return report.finalize()
