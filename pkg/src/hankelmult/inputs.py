"""Named input functions for the operator experiments.

Each generator returns an :class:`InputFunction`: a vectorised callable
with its support box and the coordinates where it is not smooth.  The
principal-value code uses both to place quadrature breakpoints; the
spectral code samples the function on a grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import eval_genlaguerre, factorial

from .errors import InputError
from .grid import GridFunction, Order, WeightedGrid

__all__ = [
    "InputFunction",
    "gaussian_bump",
    "near_atom",
    "random_smooth",
    "unit_indicator",
    "laguerre_gaussian",
    "GENERATOR_NAMES",
    "make_input",
]

BUMP_CENTER = 5.0
BUMP_WIDTH = 0.6
_BUMP_REACH = 8.6  # exp(-8.6^2/2) < 1e-16


@dataclass(frozen=True)
class InputFunction:
    """A callable input with support box, breakpoints and ``L^1`` mass.

    Attributes
    ----------
    fun : callable
        ``fun(*coords)`` evaluated with broadcasting.
    support : list of (lo, hi)
        Box outside which ``fun`` vanishes (to double precision).
    breaks : list of lists
        Per-axis coordinates where ``fun`` is not smooth.
    label : str
    l1_mass : float, optional
        Exact weighted ``L^1`` norm when known.
    """

    fun: Callable
    support: list
    breaks: list
    label: str
    l1_mass: float = None
    meta: dict = field(default_factory=dict)

    def __call__(self, *coords):
        return self.fun(*coords)

    def sample(self, grid: WeightedGrid) -> GridFunction:
        return GridFunction(grid, np.asarray(self.fun(*grid.mesh()), dtype=float))


def gaussian_bump(order, center=BUMP_CENTER, width=BUMP_WIDTH) -> InputFunction:
    """Product Gaussian ``prod exp(-(x_j - c)^2 / (2 w^2))``.

    The default center 5 keeps the bump negligible at the origin, so its
    transform decays like a Gaussian too.
    """
    order = Order.of(order)
    c, w = float(center), float(width)

    def fun(*coords):
        out = 1.0
        for x in coords:
            out = out * np.exp(-((np.asarray(x, float) - c) ** 2) / (2 * w * w))
        return out

    box = [(max(0.0, c - _BUMP_REACH * w), c + _BUMP_REACH * w)] * order.n
    return InputFunction(fun, box, [[] for _ in range(order.n)], f"gaussian-bump:{c:g}:{w:g}")


def near_atom(order, side, center=2.0) -> InputFunction:
    """Indicator of a cube of the given side, normalised to weighted mass 1."""
    order = Order.of(order)
    side, center = float(side), float(center)
    lo, hi = center - side / 2, center + side / 2
    if lo <= 0:
        raise InputError("near-atom cube must lie inside (0, inf)^n")
    mass = 1.0
    for lam in order.lambdas:
        mass *= (hi ** (2 * lam + 1) - lo ** (2 * lam + 1)) / (2 * lam + 1)
    height = 1.0 / mass

    def fun(*coords):
        inside = True
        for x in coords:
            x = np.asarray(x, float)
            inside = inside & (x > lo) & (x < hi)
        return np.where(inside, height, 0.0)

    return InputFunction(fun, [(lo, hi)] * order.n, [[lo, hi] for _ in range(order.n)],
                         f"near-atom:{side:g}", 1.0, {"side": side, "center": center, "height": height})


def random_smooth(order, seed=0, terms=4) -> InputFunction:
    """Sum of ``terms`` Gaussian bumps with random centers, widths and signs."""
    order = Order.of(order)
    rng = np.random.default_rng(seed)
    centers = rng.uniform(3.0, 9.0, size=(terms, order.n))
    widths = rng.uniform(0.45, 0.9, size=terms)
    amps = rng.choice([-1.0, 1.0], size=terms) * rng.uniform(0.5, 1.5, size=terms)

    def fun(*coords):
        coords = [np.asarray(x, float) for x in coords]
        total = 0.0
        for c, w, a in zip(centers, widths, amps):
            term = a
            for x, cj in zip(coords, c):
                term = term * np.exp(-((x - cj) ** 2) / (2 * w * w))
            total = total + term
        return total

    reach = _BUMP_REACH * widths.max()
    box = [(max(0.0, centers[:, j].min() - reach), centers[:, j].max() + reach) for j in range(order.n)]
    return InputFunction(fun, box, [[] for _ in range(order.n)], f"random-smooth:{seed}")


def unit_indicator(order) -> InputFunction:
    """Indicator of the unit cube ``(0, 1)^n`` (closed forms exist for it)."""
    order = Order.of(order)

    def fun(*coords):
        inside = True
        for x in coords:
            x = np.asarray(x, float)
            inside = inside & (x > 0) & (x < 1)
        return np.where(inside, 1.0, 0.0)

    mass = float(np.prod([1.0 / (2 * lam + 1) for lam in order.lambdas]))
    return InputFunction(fun, [(0.0, 1.0)] * order.n, [[1.0] for _ in range(order.n)], "unit-indicator", mass)


def laguerre_gaussian(order, k=3, a=1.0) -> InputFunction:
    """``Delta^k`` of a centered Gaussian, with transform ``prod y_j^{2k} e^{-a y_j^2}``.

    Per axis the function is ``k! / (2^{nu+1} a^{nu+k+1}) e^{-u} L_k^{(nu)}(u)``
    with ``u = x^2 / 4a`` and ``nu = lam - 1/2``.  Its transform vanishes to
    order ``2k`` at the origin, so multipliers that are rough at ``y = 0``
    (such as ``|y|^{2 i beta}``) produce outputs decaying like
    ``x^{-2 lam - 1 - 2k}``, which the truncated domain captures.
    """
    order = Order.of(order)
    k, a = int(k), float(a)
    if k < 0 or a <= 0:
        raise InputError("laguerre-gaussian needs k >= 0 and a > 0")

    def fun(*coords):
        out = 1.0
        for x, nu in zip(coords, order.nus):
            u = np.asarray(x, float) ** 2 / (4 * a)
            out = out * (factorial(k) / (2 ** (nu + 1) * a ** (nu + k + 1))) * np.exp(-u) * eval_genlaguerre(k, nu, u)
        return out

    reach = 2 * np.sqrt(a) * 8.6 + 2 * k
    return InputFunction(fun, [(0.0, reach)] * order.n, [[] for _ in range(order.n)],
                         f"laguerre-gaussian:{k}", meta={"k": k, "a": a})


GENERATOR_NAMES = ("gaussian-bump", "near-atom:SIDE", "random-smooth:SEED", "unit-indicator",
                   "laguerre-gaussian:K")


def make_input(name: str, order) -> InputFunction:
    """Resolve a generator name such as ``"near-atom:0.05"``."""
    base, _, arg = str(name).partition(":")
    try:
        if base == "gaussian-bump":
            return gaussian_bump(order) if not arg else gaussian_bump(order, *map(float, arg.split(":")))
        if base == "near-atom":
            return near_atom(order, float(arg) if arg else 0.2)
        if base == "unit-indicator" and not arg:
            return unit_indicator(order)
        if base == "laguerre-gaussian":
            return laguerre_gaussian(order, int(arg) if arg else 3)
        if base == "random-smooth":
            return random_smooth(order, int(arg) if arg else 0)
    except ValueError as exc:
        raise InputError(f"bad parameter in input generator {name!r}") from exc
    raise InputError(f"unknown input generator {name!r}")
