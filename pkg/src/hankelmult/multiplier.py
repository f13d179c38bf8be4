"""Laplace-type multipliers on (0, inf)^n and their two evaluation paths.

A symbol is generated by a bounded profile ``phi`` on (0, inf):

    m(y) = |y|^2 int_0^inf exp(-t |y|^2) phi(t) dt.

The *spectral path* applies ``h(m * h(f))``.  The *principal-value path*
uses the kernel

    K(x, y) = int_0^inf phi(t) d/dt prod_j W_t^{lam_j}(x_j, y_j) dt

and the boundary function ``alpha(eps)``:

    T f(x) = -lim_{eps -> 0} ( n alpha(eps) f(x) + int_{|y-x|>eps} f K dm ).

Time integrals are computed on log-spaced Gauss-Legendre panels between
``|x-y|^2/400`` (below which the integrand is below e^-100) and a large
time ``T``; the remaining tail is integrated analytically from the
large-``t`` expansion ``prod W ~ c t^-p (1 - A/t + B/t^2)`` against the
symbol's tail moments ``int_T^inf phi(t) t^(-q-1) dt``.
"""
from __future__ import annotations

import ast
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate as sp_integrate
from scipy.special import exp1, gamma, gammaincc, roots_legendre

from .errors import ConvergenceError, DomainError, GridMismatchError, InputError, SingularPointError
from .grid import GridFunction, Order, WeightedGrid
from .hankel import TransformPlan, hankel_apply

__all__ = [
    "LaplaceSymbol",
    "ImaginaryPowerParams",
    "PVConfig",
    "PVResult",
    "identity_symbol",
    "imaginary_power_symbol",
    "resolvent_symbol",
    "indicator_symbol",
    "custom_symbol",
    "symbol_from_preset",
    "PRESET_NAMES",
    "symbol_m",
    "spectral_apply",
    "PairKernels",
    "kernel_K",
    "kernel_H",
    "ball_constant",
    "alpha_epsilon",
    "normalization_C",
    "pv_apply",
    "line_nodes",
    "polar_nodes",
    "support_of",
]

DEFAULT_EPS = tuple(0.5 * 2.0**-k for k in range(1, 13))


# --------------------------------------------------------------------------
# symbols
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LaplaceSymbol:
    """A bounded profile ``phi`` and the multiplier it generates.

    Parameters
    ----------
    phi : callable
        Vectorised map ``t -> phi(t)`` on (0, inf), real or complex.
    sup_bound : float
        Bound on ``|phi|``; checked on a log-spaced sample of times.
    phi_zero_plus : complex, optional
        Right limit at 0 when it exists.
    label : str
        Display name.
    kind : str
        ``identity``, ``imaginary-power``, ``resolvent``, ``indicator`` or
        ``custom``; the first four enable closed forms.
    param : float, optional
        Parameter of the preset (beta, a or T).
    breakpoints : tuple
        Times where ``phi`` is not smooth.
    """

    phi: Callable
    sup_bound: float
    phi_zero_plus: Optional[complex] = None
    label: str = "custom"
    kind: str = "custom"
    param: Optional[float] = None
    breakpoints: tuple = ()

    def __post_init__(self):
        if not (self.sup_bound > 0 and math.isfinite(self.sup_bound)):
            raise DomainError("sup_bound must be positive and finite")
        sample = np.logspace(-8, 8, 161)
        vals = self(sample)
        if not np.all(np.isfinite(vals)):
            raise DomainError("phi must be finite on (0, inf)")
        if np.max(np.abs(vals)) > self.sup_bound * (1 + 1e-9):
            raise DomainError("|phi| exceeds the declared sup_bound")
        if self.phi_zero_plus is not None:
            p0 = complex(self.phi_zero_plus)
            d6 = abs(complex(self(1e-6)) - p0)
            d8 = abs(complex(self(1e-8)) - p0)
            if d8 > d6 * (1 + 1e-9) + 1e-13 or d8 > 1e-4 * max(1.0, self.sup_bound):
                raise DomainError("phi does not approach phi_zero_plus as t -> 0+")

    def __call__(self, t):
        t = np.asarray(t, float)
        return np.broadcast_to(np.asarray(self.phi(t), dtype=complex), t.shape)

    @property
    def is_constant(self) -> bool:
        return self.kind == "identity"

    # ------------------------------------------------------------------
    def multiplier(self, r2):
        """``m`` as a function of ``|y|^2`` (array input)."""
        r2 = np.asarray(r2, float)
        if self.kind == "identity":
            return np.ones_like(r2, dtype=complex)
        if self.kind == "imaginary-power":
            return np.exp(1j * self.param * np.log(r2))
        if self.kind == "resolvent":
            return (r2 / (self.param + r2)).astype(complex)
        if self.kind == "indicator":
            return (-np.expm1(-self.param * r2)).astype(complex)
        return _numeric_multiplier(self, r2)

    def tail_moment(self, T, q):
        """``int_T^inf phi(t) t^(-q-1) dt`` for arrays ``T > 0`` and ``q > 0``."""
        T = np.asarray(T, float)
        q = np.broadcast_to(np.asarray(q, float), T.shape)
        if self.kind == "identity":
            return (T ** (-q) / q).astype(complex)
        if self.kind == "imaginary-power":
            b = self.param
            return T ** (-q) * np.exp(-1j * b * np.log(T)) / ((q + 1j * b) * gamma(1 - 1j * b))
        if self.kind == "indicator":
            tc = self.param
            return np.where(T >= tc, 0.0, (T ** (-q) - tc ** (-q)) / q).astype(complex)
        if self.kind == "resolvent":
            return _resolvent_tail(self.param, T, q).astype(complex)
        return _numeric_tail(self, T, q)


def _numeric_multiplier(sym, r2):
    # m = int_0^inf e^{-s} phi(s / r2) ds on log-spaced panels in s; the
    # piece below s = 1e-16 is bounded by 1e-16 sup|phi| and dropped
    lo, hi = math.log(1e-16), math.log(60.0)
    base_s, base_w = _log_panels(lo, hi, 0.5, 12)
    out = np.empty(r2.shape, dtype=complex)
    res = out.reshape(-1)
    for i, val in enumerate(r2.reshape(-1)):
        brk = sorted(math.log(b * val) for b in sym.breakpoints if 1e-16 < b * val < 60.0)
        if brk:
            cuts = [lo] + brk + [hi]
            parts = [_log_panels(a, b, 0.5, 12) for a, b in zip(cuts[:-1], cuts[1:])]
            ls = np.concatenate([p[0] for p in parts])
            lw = np.concatenate([p[1] for p in parts])
        else:
            ls, lw = base_s, base_w
        s = np.exp(ls)
        res[i] = np.sum(lw * s * np.exp(-s) * sym(s / val))
    return out


def _resolvent_tail(a, T, q):
    # a^q Gamma(-q, aT) via downward recurrence from a positive order
    x = a * T
    out = np.zeros(T.shape)
    live = x < 700.0
    if not np.any(live):
        return out
    xs, qs = x[live], q[live]
    res = np.empty_like(xs)
    for qv in np.unique(qs):
        sel = qs == qv
        xv = xs[sel]
        steps = int(math.ceil(qv))
        s0 = -qv + steps
        if abs(s0) < 1e-14:
            val = exp1(xv)
        else:
            val = gammaincc(s0, xv) * gamma(s0)
        s = s0
        for _ in range(steps):
            val = (val - xv ** (s - 1.0) * np.exp(-xv)) / (s - 1.0)
            s -= 1.0
        res[sel] = a**qv * val
    out[live] = res
    return out


def _numeric_tail(sym, T, q):
    # T^-q int_0^S phi(T e^s) e^{-qs} ds, with S chosen so e^{-qS} < 1e-16
    flat_T, flat_q = T.reshape(-1), q.reshape(-1)
    out = np.empty(flat_T.shape, dtype=complex)
    for qv in np.unique(flat_q):
        sel = flat_q == qv
        span = min(37.0 / qv, 4000.0)
        s, w = _log_panels(0.0, span, 1.0, 10)
        vals = sym(flat_T[sel][:, None] * np.exp(s)[None, :]) * (w * np.exp(-qv * s))[None, :]
        out[sel] = flat_T[sel] ** (-qv) * vals.sum(axis=1)
    return out.reshape(T.shape)


@dataclass(frozen=True)
class ImaginaryPowerParams:
    """Exponent ``beta`` of ``Delta^{i beta}``; profile ``t^{-i beta}/Gamma(1 - i beta)``."""

    beta: float

    def profile(self, t):
        t = np.asarray(t, float)
        return np.exp(-1j * self.beta * np.log(t)) / gamma(1 - 1j * self.beta)

    @property
    def modulus(self) -> float:
        return float(1.0 / abs(gamma(1 - 1j * self.beta)))

    def symbol(self) -> LaplaceSymbol:
        return imaginary_power_symbol(self.beta)


def identity_symbol() -> LaplaceSymbol:
    """``phi = 1``, so ``m = 1`` and the operator is the identity."""
    return LaplaceSymbol(lambda t: np.ones_like(t), 1.0, 1.0, "identity", "identity")


def imaginary_power_symbol(beta) -> LaplaceSymbol:
    """Profile of ``Delta^{i beta}``: ``m(y) = |y|^{2 i beta}``."""
    beta = float(beta)
    params = ImaginaryPowerParams(beta)
    p0 = 1.0 if beta == 0 else None
    return LaplaceSymbol(params.profile, params.modulus * (1 + 1e-12), p0,
                         f"imaginary-power:{beta:g}", "imaginary-power", beta)


def resolvent_symbol(a=1.0) -> LaplaceSymbol:
    """``phi = exp(-a t)``: ``m = |y|^2 / (a + |y|^2)``."""
    a = float(a)
    if a <= 0:
        raise DomainError("resolvent parameter must be positive")
    return LaplaceSymbol(lambda t: np.exp(-a * t), 1.0, 1.0, f"resolvent:{a:g}", "resolvent", a)


def indicator_symbol(T=1.0) -> LaplaceSymbol:
    """``phi = 1 on [0, T]`` and 0 afterwards: ``m = 1 - exp(-T |y|^2)``."""
    T = float(T)
    if T <= 0:
        raise DomainError("indicator length must be positive")
    return LaplaceSymbol(lambda t: (t <= T).astype(float), 1.0, 1.0, f"indicator:{T:g}",
                         "indicator", T, (T,))


_SAFE_FUNCS = {
    "exp": np.exp, "log": np.log, "sin": np.sin, "cos": np.cos, "tan": np.tan,
    "sqrt": np.sqrt, "abs": np.abs, "tanh": np.tanh, "arctan": np.arctan,
    "atan": np.arctan, "sinh": np.sinh, "cosh": np.cosh,
}
_SAFE_CONSTS = {"pi": math.pi, "e": math.e}


def _compile_expr(expr: str):
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise InputError(f"cannot parse expression {expr!r}") from exc

    def ev(node, t):
        if isinstance(node, ast.Expression):
            return ev(node.body, t)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, complex)):
            return node.value
        if isinstance(node, ast.Name):
            if node.id == "t":
                return t
            if node.id in _SAFE_CONSTS:
                return _SAFE_CONSTS[node.id]
            raise InputError(f"unknown name {node.id!r} in expression")
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            val = ev(node.operand, t)
            return -val if isinstance(node.op, ast.USub) else val
        if isinstance(node, ast.BinOp):
            a, b = ev(node.left, t), ev(node.right, t)
            ops = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
                   ast.Div: np.divide, ast.Pow: np.power}
            for kind, fn in ops.items():
                if isinstance(node.op, kind):
                    return fn(a, b)
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _SAFE_FUNCS:
            if node.keywords or len(node.args) != 1:
                raise InputError("functions take exactly one argument")
            return _SAFE_FUNCS[node.func.id](ev(node.args[0], t))
        raise InputError(f"unsupported construct in expression {expr!r}")

    def phi(t):
        with np.errstate(all="ignore"):
            return np.asarray(ev(tree, np.asarray(t, float))) + 0.0 * np.asarray(t, float)

    return phi


def custom_symbol(expr: str) -> LaplaceSymbol:
    """Symbol from an arithmetic expression in ``t`` (e.g. ``"exp(-2*t)"``).

    The sup bound is the maximum of ``|phi|`` over ``t`` in [1e-12, 1e12];
    the right limit at 0 is taken as ``phi(1e-12)`` when ``phi`` has settled
    there.
    """
    phi = _compile_expr(expr)
    ts = np.logspace(-12, 12, 2401)
    vals = np.asarray(phi(ts), dtype=complex)
    if not np.all(np.isfinite(vals)):
        raise InputError(f"expression {expr!r} is not finite on (0, inf)")
    bound = float(np.max(np.abs(vals))) or 1.0
    near = np.asarray(phi(np.array([1e-10, 1e-12, 1e-14])), dtype=complex)
    p0 = complex(near[2]) if abs(near[0] - near[2]) < 1e-8 * max(1.0, bound) else None
    if p0 is not None and p0.imag == 0:
        p0 = p0.real
    return LaplaceSymbol(phi, bound * (1 + 1e-9), p0, f"custom:{expr}", "custom")


PRESET_NAMES = ("identity", "imaginary-power:BETA", "resolvent:A", "indicator:T", "custom:EXPR")


def symbol_from_preset(spec: str) -> LaplaceSymbol:
    """Resolve names such as ``"identity"``, ``"imaginary-power:0.5"``,
    ``"resolvent:1"``, ``"indicator:2"`` or ``"custom:exp(-t)"``."""
    name, _, arg = str(spec).partition(":")
    name = name.strip()
    try:
        if name == "identity" and not arg:
            return identity_symbol()
        if name == "imaginary-power":
            return imaginary_power_symbol(float(arg))
        if name == "resolvent":
            return resolvent_symbol(float(arg) if arg else 1.0)
        if name == "indicator":
            return indicator_symbol(float(arg) if arg else 1.0)
        if name == "custom" and arg:
            return custom_symbol(arg)
    except ValueError as exc:
        raise InputError(f"bad parameter in symbol preset {spec!r}") from exc
    raise InputError(f"unknown symbol preset {spec!r}")


# --------------------------------------------------------------------------
# spectral path
# --------------------------------------------------------------------------

def _squared_norm(order, y):
    y = np.asarray(y, float)
    if order is not None and order.n == 1 and (y.ndim == 0 or y.shape[-1] != 1):
        y = y[..., None]
    if np.any(y <= 0):
        raise DomainError("frequencies must lie in (0, inf)^n")
    return np.sum(y * y, axis=-1)


def symbol_m(sym: LaplaceSymbol, y):
    """``m(y)`` at a point (or array of points, last axis = coordinates)."""
    y = np.asarray(y, float)
    r2 = np.sum(y * y, axis=-1) if y.ndim >= 1 else y * y
    if np.any(np.asarray(y) <= 0):
        raise DomainError("frequencies must lie in (0, inf)^n")
    out = sym.multiplier(r2)
    return complex(out) if np.ndim(out) == 0 else out


def spectral_apply(sym: LaplaceSymbol, plan: TransformPlan, f: GridFunction) -> GridFunction:
    """``h(m * h(f))`` on the plan's grid."""
    hf = hankel_apply(plan, f)
    r2 = sum(c * c for c in plan.frequency_grid.mesh())
    return hankel_apply(plan, GridFunction(hf.grid, hf.values * sym.multiplier(r2)))


# --------------------------------------------------------------------------
# time integrals
# --------------------------------------------------------------------------

def _log_panels(a, b, width, nodes):
    """GL nodes and weights in the variable ``s`` on ``[a, b]`` split into panels."""
    count = max(1, int(math.ceil((b - a) / width)))
    x, w = roots_legendre(nodes)
    edges = np.linspace(a, b, count + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    s = (mid[:, None] + half[:, None] * x[None, :]).reshape(-1)
    ww = (half[:, None] * w[None, :]).reshape(-1)
    return s, ww


class PairKernels:
    """Batch evaluation of ``K`` and the comparison kernel for point pairs.

    Parameters
    ----------
    sym : LaplaceSymbol
    order : Order
    time_width : float
        Panel length in ``log t``.
    time_nodes : int
        Gauss-Legendre nodes per panel.
    tail_factor : float
        The analytic tail starts at ``tail_factor * max(A, x_j y_j, |x-y|^2)``.
    """

    def __init__(self, sym: LaplaceSymbol, order, time_width=1.0, time_nodes=10,
                 tail_factor=1e3, chunk=2048):
        self.sym = sym
        self.order = Order.of(order)
        self.time_width = float(time_width)
        self.time_nodes = int(time_nodes)
        self.tail_factor = float(tail_factor)
        self.chunk = int(chunk)
        nus = np.array(self.order.nus)
        self._nus = nus
        self._c = float(np.prod(2.0 ** (-nus - 1.0) / (2.0**nus * gamma(nus + 1.0))))
        self._p = float(np.sum(nus + 1.0))

    # the generic engine ----------------------------------------------------
    def _integrate(self, t_lo, t_hi, integrand):
        """Sum over pairs of ``int_{t_lo}^{t_hi} phi(t) integrand(t) dt``.

        Pairs are sorted by the length of their log-range and processed in
        chunks; each chunk uses a common panel count.  Symbol breakpoints
        split the range.
        """
        P = t_lo.size
        out = np.zeros(P, dtype=complex)
        segments = [(t_lo, t_hi)]
        for b in self.sym.breakpoints:
            new = []
            for lo, hi in segments:
                new.append((lo, np.minimum(hi, np.maximum(lo, b))))
                new.append((np.maximum(lo, np.minimum(hi, b)), hi))
            segments = new
        gx, gw = roots_legendre(self.time_nodes)
        for lo, hi in segments:
            live = hi > lo * (1 + 1e-14)
            if not np.any(live):
                continue
            idx_all = np.nonzero(live)[0]
            span = np.log(hi[idx_all] / lo[idx_all])
            order = idx_all[np.argsort(span)]
            spans = np.log(hi[order] / lo[order])
            for start in range(0, order.size, self.chunk):
                idx = order[start:start + self.chunk]
                count = max(1, int(math.ceil(spans[start:start + self.chunk].max() / self.time_width)))
                a = np.log(lo[idx])
                h = np.log(hi[idx] / lo[idx]) / count
                # nodes: (pairs, count * time_nodes)
                centers = a[:, None] + h[:, None] * (np.arange(count)[None, :] + 0.5)
                s = (centers[:, :, None] + 0.5 * h[:, None, None] * gx[None, None, :]).reshape(idx.size, -1)
                w = np.broadcast_to((0.5 * h[:, None, None] * gw[None, None, :]), (idx.size, count, gx.size)).reshape(idx.size, -1)
                t = np.exp(s)
                vals = self.sym(t) * integrand(t, idx) * t * w
                out[idx] += vals.sum(axis=1)
        return out

    def _tail(self, T, c, p, A, B):
        s = self.sym
        return c * (-p * s.tail_moment(T, p) + (p + 1) * A * s.tail_moment(T, p + 1)
                    - (p + 2) * B * s.tail_moment(T, p + 2))

    # kernels ----------------------------------------------------------------
    def bessel_kernel(self, x, y):
        """``K(x, y)`` for arrays of points ``(P, n)``."""
        x, y = self._pairs(x, y)
        P = x.shape[0]
        if self.sym.is_constant:
            return np.zeros(P, dtype=complex)
        if self.sym.kind == "indicator":
            return self._product_heat(self.sym.param, x, y).astype(complex)
        d2 = np.sum((x - y) ** 2, axis=1)
        q = x * y
        A = 0.25 * np.sum(x * x + y * y, axis=1)
        B = 0.5 * A * A + np.sum(q * q / (16.0 * (self._nus + 1.0)), axis=1)
        T = self.tail_factor * np.maximum.reduce([A, q.max(axis=1), d2])
        t_lo = d2 / 400.0

        def integrand(t, idx):
            return self._product_dt(t, x[idx], y[idx])

        body = self._integrate(t_lo, T, integrand)
        return body + self._tail(T, self._c, self._p, A, B)

    def euclidean_kernel(self, x, y):
        """``H(x, y) = int phi(t) d/dt[(4 pi t)^{-n/2} e^{-|x-y|^2/4t}] dt``."""
        x, y = self._pairs(x, y)
        n = self.order.n
        r2 = np.sum((x - y) ** 2, axis=1)
        if self.sym.is_constant:
            return np.zeros(r2.size, dtype=complex)
        if self.sym.kind == "indicator":
            tc = self.sym.param
            return ((4 * math.pi * tc) ** (-n / 2) * np.exp(-r2 / (4 * tc))).astype(complex)
        if self.sym.kind == "imaginary-power":
            b = self.sym.param
            return (1j * b * (4 * math.pi) ** (-n / 2) * np.exp((-1j * b - n / 2) * np.log(r2 / 4))
                    * gamma(n / 2 + 1j * b) / gamma(1 - 1j * b))
        A = r2 / 4.0
        T = self.tail_factor * r2

        def integrand(t, idx):
            rr = r2[idx][:, None]
            return (4 * math.pi * t) ** (-n / 2) * np.exp(-rr / (4 * t)) * (rr / (4 * t * t) - n / (2 * t))

        body = self._integrate(r2 / 400.0, T, integrand)
        return body + self._tail(T, (4 * math.pi) ** (-n / 2), n / 2.0, A, 0.5 * A * A)

    def comparison_kernel(self, x, y, H=None):
        """``prod_j (x_j y_j)^{-lam_j} H(x, y)``."""
        x, y = self._pairs(x, y)
        if H is None:
            H = self.euclidean_kernel(x, y)
        lam = np.array(self.order.lambdas)
        return H * np.prod((x * y) ** (-lam), axis=1)

    # helpers ---------------------------------------------------------------
    def _pairs(self, x, y):
        n = self.order.n
        x = np.asarray(x, float).reshape(-1, n)
        y = np.asarray(y, float).reshape(-1, n)
        x, y = np.broadcast_arrays(x, y)
        if np.any(x <= 0) or np.any(y <= 0):
            raise DomainError("points must lie in (0, inf)^n")
        if np.any(np.all(x == y, axis=1)):
            raise SingularPointError("kernel evaluated on the diagonal x = y")
        return x, y

    def _product_dt(self, t, x, y):
        from .semigroup import dt_heat_kernel_1d, heat_kernel_1d

        lams = self.order.lambdas
        if len(lams) == 1:
            return dt_heat_kernel_1d(lams[0], t, x[:, 0:1], y[:, 0:1])
        vals = [heat_kernel_1d(l, t, x[:, j:j + 1], y[:, j:j + 1]) for j, l in enumerate(lams)]
        ders = [dt_heat_kernel_1d(l, t, x[:, j:j + 1], y[:, j:j + 1]) for j, l in enumerate(lams)]
        total = 0.0
        for i in range(len(lams)):
            term = ders[i]
            for j in range(len(lams)):
                if j != i:
                    term = term * vals[j]
            total = total + term
        return total

    def _product_heat(self, t, x, y):
        from .semigroup import heat_kernel_1d

        out = 1.0
        for j, lam in enumerate(self.order.lambdas):
            out = out * heat_kernel_1d(lam, t, x[:, j], y[:, j])
        return out


def _scalar_or_array(out, x):
    return complex(out[0]) if np.asarray(x).ndim <= 1 else out.reshape(np.asarray(x).shape[:-1])


def kernel_K(sym: LaplaceSymbol, order, x, y, time_width=1.0, time_nodes=10):
    """Principal-value kernel ``int_0^inf phi(t) d/dt prod_j W_t(x_j, y_j) dt``.

    ``x`` and ``y`` are points (or arrays of points with coordinates on the
    last axis; in one dimension plain scalars are accepted).
    """
    order = Order.of(order)
    xa, ya = _as_points(order.n, x), _as_points(order.n, y)
    eng = PairKernels(sym, order, time_width, time_nodes)
    out = eng.bessel_kernel(xa.reshape(-1, order.n), ya.reshape(-1, order.n))
    return complex(out[0]) if xa.ndim == 1 and ya.ndim == 1 else out.reshape(np.broadcast_shapes(xa.shape, ya.shape)[:-1])


def kernel_H(sym: LaplaceSymbol, n, x, y, time_width=1.0, time_nodes=10):
    """Euclidean comparison kernel ``int phi(t) d/dt[e^{-|x-y|^2/4t} (4 pi t)^{-n/2}] dt``."""
    order = Order((0.0,) * int(n))
    xa, ya = _as_points(order.n, x), _as_points(order.n, y)
    eng = PairKernels(sym, order, time_width, time_nodes)
    out = eng.euclidean_kernel(xa.reshape(-1, order.n), ya.reshape(-1, order.n))
    return complex(out[0]) if xa.ndim == 1 and ya.ndim == 1 else out.reshape(np.broadcast_shapes(xa.shape, ya.shape)[:-1])


def _as_points(n, x):
    x = np.asarray(x, float)
    if n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != n:
        raise GridMismatchError("point dimension differs from the order")
    return x


# --------------------------------------------------------------------------
# boundary function and normalisation
# --------------------------------------------------------------------------

def ball_constant(n, quadrature=False) -> float:
    """``M = (2 sqrt(pi))^{-n} int_{|z|<1, z in R^{n-1}} sqrt(1 - |z|^2) dz``."""
    n = int(n)
    if n < 1:
        raise DomainError("dimension must be positive")
    k = n - 1
    if quadrature:
        if k == 0:
            ball = 1.0
        else:
            sphere = 2 * math.pi ** (k / 2) / math.gamma(k / 2)
            radial, _ = sp_integrate.quad(lambda r: r ** (k - 1) * math.sqrt(1 - r * r), 0, 1,
                                          epsabs=0, epsrel=1e-13, limit=200)
            ball = sphere * radial
    else:
        ball = math.pi ** (k / 2) * math.gamma(1.5) / math.gamma(k / 2 + 1.5)
    return (2 * math.sqrt(math.pi)) ** (-n) * ball


def alpha_epsilon(sym: LaplaceSymbol, n, eps):
    """``alpha(eps) = -M int_0^{1/eps^2} phi(s eps^2) e^{-1/4s} s^{-n/2-1} ds``.

    Evaluated after the substitution ``u = 1/(4s)``:
    ``-M 4^{n/2} int_{eps^2/4}^inf phi(eps^2/(4u)) u^{n/2-1} e^{-u} du``.
    """
    n = int(n)
    eps_arr = np.asarray(eps, float)
    if np.any(eps_arr <= 0):
        raise DomainError("eps must be positive")
    M = ball_constant(n)
    flat = eps_arr.reshape(-1)
    out = np.empty(flat.shape, dtype=complex)
    for i, e in enumerate(flat):
        lo = e * e / 4.0
        if sym.is_constant:
            out[i] = -M * 4 ** (n / 2) * gammaincc(n / 2, lo) * gamma(n / 2) * complex(sym(1.0))
            continue
        cuts = [lo] + sorted(e * e / (4 * b) for b in sym.breakpoints if e * e / (4 * b) > lo) + [max(80.0, 2 * lo)]
        cuts = [c for c in cuts if c <= max(80.0, 2 * lo)]
        total = 0.0 + 0.0j
        for a, b in zip(cuts[:-1], cuts[1:]):
            s, w = _log_panels(math.log(a), math.log(b), 0.5, 12)
            u = np.exp(s)
            total += np.sum(w * sym(e * e / (4 * u)) * u ** (n / 2) * np.exp(-u))
        out[i] = -M * 4 ** (n / 2) * total
    if eps_arr.ndim == 0:
        return complex(out[0])
    return out.reshape(eps_arr.shape)


def normalization_C(sym: LaplaceSymbol, n, quadrature=None) -> float:
    """Constant ``C`` with ``C phi(0+) = -n lim_{eps -> 0} alpha(eps)``.

    The limit equals ``-M phi(0+) int_0^inf e^{-1/4s} s^{-n/2-1} ds``.
    With ``quadrature=True`` (default for ``n >= 3``) both ``M`` and the
    time integral are computed numerically; otherwise in closed form.
    """
    if sym.phi_zero_plus is None:
        raise DomainError("normalization needs phi(0+), which this symbol lacks")
    n = int(n)
    if quadrature is None:
        quadrature = n >= 3
    M = ball_constant(n, quadrature=quadrature)
    if quadrature:
        integral, _ = sp_integrate.quad(lambda s: math.exp(-1 / (4 * s)) * s ** (-n / 2 - 1), 0, np.inf,
                                        epsabs=0, epsrel=1e-13, limit=400)
    else:
        integral = 4 ** (n / 2) * math.gamma(n / 2)
    return n * M * integral


# --------------------------------------------------------------------------
# quadrature nodes around an output point
# --------------------------------------------------------------------------

def support_of(f, grid=None):
    """Bounding box of ``f``'s support as a list of ``(lo, hi)`` per axis.

    Callables may carry a ``support`` attribute; grid functions use the
    panels that contain nodes where ``|f| > 1e-15 max|f|``.
    """
    if isinstance(f, GridFunction):
        mag = np.abs(f.values)
        if mag.max() == 0:
            return None
        keep = mag > 1e-15 * mag.max()
        box = []
        for axis, ax in enumerate(f.grid.axes):
            other = tuple(i for i in range(f.grid.n) if i != axis)
            hits = np.nonzero(keep.any(axis=other) if other else keep)[0]
            p_lo = hits.min() // ax.panel_order
            p_hi = hits.max() // ax.panel_order
            box.append((float(ax.edges[p_lo]), float(ax.edges[p_hi + 1])))
        return box
    sup = getattr(f, "support", None)
    if sup is not None:
        return [tuple(map(float, s)) for s in sup]
    if grid is None:
        raise InputError("a callable without a support attribute needs a grid")
    return list(grid.bounds)


def _breaks_of(f, box):
    if isinstance(f, GridFunction):
        return [[e for e in ax.edges if lo < e < hi] for ax, (lo, hi) in zip(f.grid.axes, box)]
    br = getattr(f, "breaks", None)
    return [list(b) for b in br] if br is not None else [[] for _ in box]


def line_nodes(x, lo, hi, breaks, eps, nodes=8):
    """One-dimensional nodes around ``x`` on ``[lo, hi]``.

    Breakpoints are placed at the support ends, at ``breaks``, at
    ``x/2`` and ``2x``, at ``x +- eps_k`` and at dyadic distances beyond
    ``eps_1``.  The ball ``|y - x| < eps_K`` is left out.

    Returns
    -------
    y, w, shell
        Nodes, Lebesgue weights, and the number of schedule entries
        ``eps_k >= |y - x|`` (0 means outside every truncation radius).
    """
    eps = np.asarray(eps, float)
    far = [eps[0] * 2.0**j for j in range(1, 64) if eps[0] * 2.0**j < (hi - lo) + abs(x) + 1]
    radii = np.concatenate([eps, far])
    pts = [lo, hi, x / 2, 2 * x] + list(breaks) + list(x - radii) + list(x + radii)
    pts = np.unique(np.clip(np.array(pts, float), lo, hi))
    inner = eps[-1]
    gx, gw = roots_legendre(nodes)
    a, b = pts[:-1], pts[1:]
    mid = 0.5 * (a + b)
    keep = (b > a) & (np.abs(mid - x) > inner)
    a, b = a[keep], b[keep]
    half = 0.5 * (b - a)
    y = (0.5 * (a + b))[:, None] + half[:, None] * gx[None, :]
    w = half[:, None] * gw[None, :]
    y, w = y.reshape(-1), w.reshape(-1)
    r = np.abs(y - x)
    shell = np.sum(eps[None, :] >= r[:, None], axis=1)
    return y, w, shell


def polar_nodes(x, box, eps, radial_nodes=8, angular=48):
    """Nodes ``y = x + r omega`` for ``n >= 2`` (``n = 2`` or ``3``).

    Radial panels break at every schedule radius and at dyadic radii
    beyond; directions are uniform angles (``n = 2``) or Gauss-Legendre
    in ``cos theta`` times uniform azimuth (``n = 3``).  Nodes outside the
    support box are dropped.
    """
    x = np.asarray(x, float)
    n = x.size
    eps = np.asarray(eps, float)
    corners = np.array(np.meshgrid(*[[lo, hi] for lo, hi in box], indexing="ij")).reshape(n, -1).T
    rmax = float(np.max(np.linalg.norm(corners - x, axis=1)))
    far = [eps[0] * 2.0**j for j in range(1, 64) if eps[0] * 2.0 ** (j - 1) < rmax]
    radii = np.unique(np.concatenate([eps, far, [rmax]]))
    radii = radii[radii <= rmax]
    gx, gw = roots_legendre(radial_nodes)
    a, b = radii[:-1], radii[1:]
    half = 0.5 * (b - a)
    r = ((0.5 * (a + b))[:, None] + half[:, None] * gx[None, :]).reshape(-1)
    wr = (half[:, None] * gw[None, :]).reshape(-1) * r ** (n - 1)
    if n == 2:
        th = 2 * math.pi * (np.arange(angular) + 0.5) / angular
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
        wd = np.full(angular, 2 * math.pi / angular)
    elif n == 3:
        nc = max(4, angular // 2)
        cx, cw = roots_legendre(nc)
        ph = 2 * math.pi * (np.arange(angular) + 0.5) / angular
        sin_t = np.sqrt(1 - cx * cx)
        dirs = np.stack([np.outer(sin_t, np.cos(ph)).reshape(-1), np.outer(sin_t, np.sin(ph)).reshape(-1),
                         np.repeat(cx, angular)], axis=1)
        wd = np.repeat(cw, angular) * (2 * math.pi / angular)
    else:
        raise DomainError("polar nodes are implemented for n = 2 and 3")
    y = x[None, None, :] + r[:, None, None] * dirs[None, :, :]
    w = wr[:, None] * wd[None, :]
    shell = np.sum(eps[None, :] >= r[:, None], axis=1)
    shell = np.broadcast_to(shell[:, None], w.shape)
    y, w, shell = y.reshape(-1, n), w.reshape(-1), shell.reshape(-1)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    inside = np.all((y > lo) & (y < hi) & (y > 0), axis=1)
    return y[inside], w[inside], shell[inside]


def point_nodes(x, box, breaks, eps, radial_nodes=8, angular=48):
    """Dispatch to :func:`line_nodes` (``n = 1``) or :func:`polar_nodes`."""
    x = np.atleast_1d(np.asarray(x, float))
    if x.size == 1:
        y, w, shell = line_nodes(float(x[0]), box[0][0], box[0][1], breaks[0], eps, radial_nodes)
        return y[:, None], w, shell
    return polar_nodes(x, box, eps, radial_nodes, angular)


def _evaluate_f(f, y):
    """Values of a grid function (interpolated) or callable at points ``(P, n)``."""
    if isinstance(f, GridFunction):
        return np.asarray(f(*[y[:, j] for j in range(y.shape[1])]))
    return np.asarray(f(*[y[:, j] for j in range(y.shape[1])]))


# --------------------------------------------------------------------------
# principal-value path
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PVConfig:
    """Settings of the principal-value evaluation.

    Attributes
    ----------
    eps_schedule : tuple
        Strictly decreasing truncation radii (at least two).
    time_width, time_nodes : float, int
        Log-time panel length and Gauss-Legendre nodes per panel.
    extrapolate : bool
        Aitken-type extrapolation on the last three truncations.
    radial_nodes, angular_nodes : int
        Spatial quadrature around each output point.
    strict : bool
        Raise :class:`ConvergenceError` instead of warning when a
        truncation sequence fails to settle.
    """

    eps_schedule: tuple = DEFAULT_EPS
    time_width: float = 1.0
    time_nodes: int = 10
    extrapolate: bool = True
    radial_nodes: int = 8
    angular_nodes: int = 48
    strict: bool = False

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_schedule)
        if len(eps) < 2 or any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise DomainError("eps schedule must be strictly decreasing, positive, with >= 2 entries")
        object.__setattr__(self, "eps_schedule", eps)

    def truncated(self, count) -> "PVConfig":
        """Same settings with only the first ``count`` radii."""
        return PVConfig(self.eps_schedule[:count], self.time_width, self.time_nodes, self.extrapolate,
                        self.radial_nodes, self.angular_nodes, self.strict)


@dataclass
class PVResult:
    """Output of :func:`pv_apply`.

    ``function`` holds the limit values; ``truncations[:, k]`` the value
    ``-(n alpha(eps_k) f(x) + int_{|y-x|>eps_k} f K dm)``.
    """

    function: GridFunction
    truncations: np.ndarray
    alphas: np.ndarray
    eps_schedule: tuple
    converged: np.ndarray = field(repr=False)
    alpha_converged: bool = True

    @property
    def increments(self) -> np.ndarray:
        return np.abs(np.diff(self.truncations, axis=1))

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))


def _extrapolate(seq):
    """Aitken step on the last three entries with the ratio clamped to 2/3."""
    s0, s1, s2 = seq[:, -3], seq[:, -2], seq[:, -1]
    d1, d2 = s1 - s0, s2 - s1
    with np.errstate(all="ignore"):
        r = np.where(np.abs(d1) > 0, d2 / d1, 0.0)
    mag = np.abs(r)
    r = np.where(mag > 2.0 / 3.0, r * (2.0 / 3.0) / np.maximum(mag, 1e-300), r)
    return s2 + d2 * r / (1 - r)


def sweep_points(f, order, points, eps, eng: PairKernels, cfg, want_local=False, box=None):
    """Shell sums of ``f K`` (and optionally the local split) around each point.

    Returns a dict with arrays of shape ``(P, K+1)`` holding, for each
    output point and shell index ``c``, the sums of the integrand over
    nodes with ``shell == c``.  Keys: ``K`` (full kernel), and when
    ``want_local`` is set, ``K_global_abs``, ``diff_local_abs`` and
    ``H_local`` used by the analysis operators.
    """
    order = Order.of(order)
    n = order.n
    if box is None:
        box = support_of(f)
    if box is None:
        return None
    breaks = _breaks_of(f, box)
    lam = np.array(order.lambdas)
    K = len(eps)
    P = points.shape[0]
    keys = ["K"] + (["K_global_abs", "diff_local_abs", "H_local", "K_local"] if want_local else [])
    sums = {k: np.zeros((P, K + 1), dtype=complex) for k in keys}
    batch_y, batch_w, batch_s, batch_p = [], [], [], []

    def flush():
        if not batch_y:
            return
        y = np.concatenate(batch_y)
        w = np.concatenate(batch_w)
        sh = np.concatenate(batch_s)
        pid = np.concatenate(batch_p)
        x = points[pid]
        fy = _evaluate_f(f, y).astype(complex)
        dens = fy * w * np.prod(y ** (2 * lam), axis=1)
        nz = dens != 0
        x, y, dens, sh, pid = x[nz], y[nz], dens[nz], sh[nz], pid[nz]
        if x.shape[0] == 0:
            batch_y.clear(); batch_w.clear(); batch_s.clear(); batch_p.clear()
            return
        kv = eng.bessel_kernel(x, y)
        flat = pid * (K + 1) + sh
        size = P * (K + 1)
        sums["K"] += np.bincount(flat, weights=(dens * kv).real, minlength=size).reshape(P, K + 1)
        sums["K"] += 1j * np.bincount(flat, weights=(dens * kv).imag, minlength=size).reshape(P, K + 1)
        if want_local:
            local = np.all((y > x / 2) & (y < 2 * x), axis=1)
            hv = eng.comparison_kernel(x, y)
            absd = np.abs(dens)
            parts = {
                "K_global_abs": np.where(local, 0.0, absd * np.abs(kv)),
                "diff_local_abs": np.where(local, absd * np.abs(kv - hv), 0.0),
                "H_local": np.where(local, dens * hv, 0.0),
                "K_local": np.where(local, dens * kv, 0.0),
            }
            for key, val in parts.items():
                val = np.asarray(val, dtype=complex)
                sums[key] += np.bincount(flat, weights=val.real, minlength=size).reshape(P, K + 1)
                sums[key] += 1j * np.bincount(flat, weights=val.imag, minlength=size).reshape(P, K + 1)
        batch_y.clear(); batch_w.clear(); batch_s.clear(); batch_p.clear()

    pending = 0
    for i in range(P):
        y, w, sh = point_nodes(points[i], box, breaks, eps, cfg.radial_nodes, cfg.angular_nodes)
        if y.shape[0] == 0:
            continue
        batch_y.append(y)
        batch_w.append(w)
        batch_s.append(sh)
        batch_p.append(np.full(y.shape[0], i))
        pending += y.shape[0]
        if pending > 20000:
            flush()
            pending = 0
    flush()
    return sums


def pv_apply(sym: LaplaceSymbol, order, f, cfg: PVConfig = PVConfig(), grid: WeightedGrid = None) -> PVResult:
    """Principal-value evaluation of ``T f`` at the nodes of ``grid``.

    Parameters
    ----------
    sym : LaplaceSymbol
    order : Order or sequence
    f : GridFunction or callable
        Input; callables may expose ``support`` and ``breaks`` attributes.
    cfg : PVConfig
    grid : WeightedGrid, optional
        Output grid, defaulting to ``f.grid``.

    Returns
    -------
    PVResult
        Limit values plus the per-eps truncations for diagnostics.  A
        truncation sequence whose increments stop shrinking is reported as
        not converged (warning, or :class:`ConvergenceError` when
        ``cfg.strict`` is set).
    """
    order = Order.of(order)
    if grid is None:
        if not isinstance(f, GridFunction):
            raise InputError("an output grid is required for callable inputs")
        grid = f.grid
    if grid.n != order.n:
        raise GridMismatchError("output grid dimension differs from the order")
    points = grid.points()
    eps = np.array(cfg.eps_schedule)
    K = eps.size
    n = order.n
    alphas = np.asarray(alpha_epsilon(sym, n, eps))
    fx = _evaluate_f(f, points).astype(complex)
    if sym.is_constant:
        integrals = np.zeros((points.shape[0], K), dtype=complex)
    else:
        eng = PairKernels(sym, order, cfg.time_width, cfg.time_nodes)
        sums = sweep_points(f, order, points, eps, eng, cfg)
        if sums is None:
            integrals = np.zeros((points.shape[0], K), dtype=complex)
        else:
            integrals = np.cumsum(sums["K"], axis=1)[:, :K]
    trunc = -(integrals + n * alphas[None, :] * fx[:, None])
    inc = np.abs(np.diff(trunc, axis=1))
    scale = np.maximum(np.abs(trunc[:, -1]), 1e-300)
    settled = inc[:, -1] <= np.maximum(1e-3 * scale, 1e-12 * max(1.0, float(np.max(np.abs(trunc)))))
    shrinking = np.all(inc[:, -2:] <= inc[:, -3:-1] * 1.05 + 1e-14, axis=1) if K >= 3 else settled
    converged = settled | shrinking
    if cfg.extrapolate and K >= 3:
        values = _extrapolate(trunc)
    else:
        values = trunc[:, -1]
    if not np.all(converged):
        msg = f"principal-value truncations did not settle at {int(np.sum(~converged))} points"
        if cfg.strict:
            raise ConvergenceError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    # alpha(eps) itself settles exactly when phi(0+) exists
    da = np.abs(np.diff(alphas))
    alpha_ok = bool(da[-1] <= 1e-3 * max(1.0, float(np.abs(alphas[-1])))) if K >= 2 else True
    if not alpha_ok:
        warnings.warn("alpha(eps) has no limit on this schedule (phi(0+) may not exist)",
                      RuntimeWarning, stacklevel=2)
    out = GridFunction(grid, values.reshape(grid.shape))
    return PVResult(out, trunc, alphas, tuple(eps), converged, alpha_ok)
