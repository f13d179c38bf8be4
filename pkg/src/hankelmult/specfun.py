"""Bessel functions J_nu and I_nu of real order nu > -1.

All routines accept a scalar order and a scalar or array argument and
return a value of matching shape.  Three regimes are used:

* ascending power series for small arguments,
* Miller's backward recurrence for the middle band of ``J``,
* Hankel-type asymptotic expansions with 12 terms for large arguments.

Modified functions are always evaluated in the exponentially scaled form
``z**(-nu) * exp(-z) * I_nu(z)``, so downstream code can merge exponents
analytically instead of multiplying huge and tiny numbers.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import gamma

from .errors import DomainError, InputError

__all__ = [
    "ASYM_TERMS",
    "asym_coeffs",
    "bessel_j",
    "bessel_j_scaled",
    "bessel_i_scaled",
    "bessel_i_exp_scaled",
    "bessel_i_scaled_exp",
    "bessel_i_diff_scaled_exp",
    "check_order",
]

ASYM_TERMS = 12
_TINY = 1e-300


def check_order(nu) -> float:
    """Validate a Bessel order and return it as a float."""
    try:
        nu = float(nu)
    except (TypeError, ValueError) as exc:
        raise DomainError(f"Bessel order must be a real number, got {nu!r}") from exc
    if not math.isfinite(nu) or nu <= -1.0:
        raise DomainError(f"Bessel order must exceed -1, got {nu}")
    return nu


def _prepare(nu, z, positive=False):
    nu = check_order(nu)
    arr = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InputError("Bessel argument must be finite")
    if positive and np.any(arr <= 0):
        raise InputError("argument must be positive; use bessel_j_scaled at z = 0")
    if np.any(arr < 0):
        raise InputError("argument must be nonnegative")
    return nu, arr


def _finish(out, z):
    if np.ndim(z) == 0:
        return float(out.reshape(()))
    return out


def asym_coeffs(order, count: int) -> np.ndarray:
    """Coefficients of the large-argument expansion of I_nu and J_nu.

    Parameters
    ----------
    order : float
        Bessel order, > -1.
    count : int
        Number of coefficients to return (>= 1).

    Returns
    -------
    ndarray
        ``terms[k] = prod_{j=1..k} (4 nu^2 - (2j-1)^2) / (4**k k!)`` for
        ``k = 0 .. count-1``; ``terms[0] == 1`` exactly.
    """
    nu = check_order(order)
    if int(count) < 1:
        raise DomainError("count must be at least 1")
    mu = 4.0 * nu * nu
    terms = np.empty(int(count))
    terms[0] = 1.0
    for k in range(1, int(count)):
        terms[k] = terms[k - 1] * (mu - (2 * k - 1) ** 2) / (4.0 * k)
    return terms


# --------------------------------------------------------------------------
# J_nu
# --------------------------------------------------------------------------

def _j_series_scaled(nu, z):
    """z^-nu J_nu(z) by the power series; intended for z <= ~8."""
    q = -0.25 * z * z
    term = np.full_like(z, 1.0 / (2.0**nu * gamma(nu + 1.0)))
    total = term.copy()
    for k in range(1, 400):
        term = term * q / (k * (nu + k))
        total += term
        if np.all(np.abs(term) <= 1e-17 * np.maximum(np.abs(total), _TINY)):
            break
    return total


def _j_miller_scaled(nu, z):
    """z^-nu J_nu(z) by Miller's backward recurrence.

    The unnormalised sequence is fixed through the Neumann-type identity
    ``(z/2)**nu = sum_k c_k J_{nu+2k}(z)`` with ``c_0 = Gamma(nu+1)`` and
    ``c_k = (nu+2k) Gamma(nu+k)/k!``.
    """
    zmax = float(np.max(z))
    top = int(zmax + 12.0 * zmax ** (1.0 / 3.0) + 40.0)
    top += top % 2
    # c_k for k = 0..top/2, built with a ratio recurrence
    half = top // 2
    coef = np.empty(half + 1)
    coef[0] = gamma(nu + 1.0)
    ratio = gamma(nu + 1.0)  # Gamma(nu+k)/k! at k=1
    for k in range(1, half + 1):
        if k > 1:
            ratio *= (nu + k - 1.0) / k
        coef[k] = (nu + 2.0 * k) * ratio

    upper = np.zeros_like(z)
    cur = np.full_like(z, 1e-30)
    total = coef[half] * cur
    for m in range(top, 0, -1):
        lower = (2.0 * (nu + m) / z) * cur - upper
        upper, cur = cur, lower
        if (m - 1) % 2 == 0:
            total = total + coef[(m - 1) // 2] * cur
        big = np.abs(cur) > 1e250
        if np.any(big):
            upper = np.where(big, upper * 1e-250, upper)
            total = np.where(big, total * 1e-250, total)
            cur = np.where(big, cur * 1e-250, cur)
    return cur / (total * 2.0**nu)


def _j_asymptotic(nu, z):
    """J_nu(z) from the Hankel expansion with ASYM_TERMS terms."""
    terms = asym_coeffs(nu, ASYM_TERMS) / 2.0 ** np.arange(ASYM_TERMS)
    inv = 1.0 / z
    p = np.zeros_like(z)
    q = np.zeros_like(z)
    power = np.ones_like(z)
    for k in range(ASYM_TERMS):
        sign = -1.0 if (k // 2) % 2 else 1.0
        if k % 2 == 0:
            p += sign * terms[k] * power
        else:
            q += sign * terms[k] * power
        power = power * inv
    chi = z - (0.5 * nu + 0.25) * math.pi
    return np.sqrt(2.0 / (math.pi * z)) * (p * np.cos(chi) - q * np.sin(chi))


def _j_bounds(nu):
    return 8.0, max(25.0, nu * nu)


def _j_scaled_core(nu, z):
    """z^-nu J_nu(z) over the whole half line (z >= 0)."""
    small, large = _j_bounds(nu)
    out = np.empty_like(z)
    s = z <= small
    a = z > large
    m = ~(s | a)
    if np.any(s):
        out[s] = _j_series_scaled(nu, z[s])
    if np.any(m):
        out[m] = _j_miller_scaled(nu, z[m])
    if np.any(a):
        za = z[a]
        out[a] = _j_asymptotic(nu, za) * za ** (-nu)
    return out


def bessel_j(order, z):
    """Bessel function of the first kind J_nu(z) for z > 0.

    Parameters
    ----------
    order : float
        Order nu > -1.
    z : float or array_like
        Positive argument.

    Returns
    -------
    float or ndarray
    """
    nu, arr = _prepare(order, z, positive=True)
    flat = arr.reshape(-1)
    small, large = _j_bounds(nu)
    out = np.empty_like(flat)
    a = flat > large
    if np.any(a):
        out[a] = _j_asymptotic(nu, flat[a])
    if np.any(~a):
        zz = flat[~a]
        out[~a] = _j_scaled_core(nu, zz) * zz**nu
    return _finish(out.reshape(arr.shape), z)


def bessel_j_scaled(order, z):
    """The entire function z**(-nu) J_nu(z), finite at z = 0.

    At ``z = 0`` the value is ``1 / (2**nu Gamma(nu+1))``.
    """
    nu, arr = _prepare(order, z)
    out = _j_scaled_core(nu, arr.reshape(-1))
    return _finish(out.reshape(arr.shape), z)


# --------------------------------------------------------------------------
# I_nu
# --------------------------------------------------------------------------

def _i_switch(nu):
    return max(30.0, nu * nu)


def _i_series_block(nu, z, lead):
    q = 0.25 * z * z
    term = np.full_like(z, lead)
    total = term.copy()
    for k in range(1, 2000):
        term = term * q / (k * (nu + k))
        total += term
        if np.all(term <= 1e-17 * total):
            break
    return total


def _i_series_scaled_exp(nu, z):
    # all terms positive: no cancellation, only e^{-z} applied at the end;
    # arguments are grouped by size so small ones stop after few terms
    lead = 1.0 / (2.0**nu * gamma(nu + 1.0))
    out = np.empty_like(z)
    edges = (0.0, 0.5, 2.0, 6.0, 15.0, np.inf)
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (z >= lo) & (z < hi)
        if np.any(sel):
            out[sel] = _i_series_block(nu, z[sel], lead)
    return out * np.exp(-z)


def _i_asym_sum(coeffs, z):
    out = np.zeros_like(z)
    power = np.ones_like(z)
    inv = -0.5 / z
    for c in coeffs:
        out += c * power
        power = power * inv
    return out


def bessel_i_scaled_exp(order, z):
    """z**(-nu) exp(-z) I_nu(z), the overflow-free building block.

    Finite at ``z = 0`` where it equals ``1 / (2**nu Gamma(nu+1))``.
    """
    nu, arr = _prepare(order, z)
    flat = arr.reshape(-1)
    out = np.empty_like(flat)
    big = flat > _i_switch(nu)
    if np.any(~big):
        out[~big] = _i_series_scaled_exp(nu, flat[~big])
    if np.any(big):
        zb = flat[big]
        lead = np.exp(-nu * np.log(zb)) / np.sqrt(2.0 * math.pi * zb)
        out[big] = lead * _i_asym_sum(asym_coeffs(nu, ASYM_TERMS), zb)
    return _finish(out.reshape(arr.shape), z)


def bessel_i_diff_scaled_exp(order, z):
    """z**(-nu) exp(-z) (I_nu(z) - I_{nu+1}(z)).

    For large arguments the difference is taken coefficient by coefficient
    in the asymptotic series, where the leading terms cancel exactly.
    """
    nu, arr = _prepare(order, z)
    flat = arr.reshape(-1)
    out = np.empty_like(flat)
    big = flat > max(_i_switch(nu), _i_switch(nu + 1.0))
    if np.any(~big):
        zs = flat[~big]
        out[~big] = bessel_i_scaled_exp(nu, zs) - zs * bessel_i_scaled_exp(nu + 1.0, zs)
    if np.any(big):
        zb = flat[big]
        diff = asym_coeffs(nu, ASYM_TERMS + 1) - asym_coeffs(nu + 1.0, ASYM_TERMS + 1)
        lead = np.exp(-nu * np.log(zb)) / np.sqrt(2.0 * math.pi * zb)
        out[big] = lead * _i_asym_sum(diff, zb)
    return _finish(out.reshape(arr.shape), z)


def bessel_i_scaled(order, z):
    """z**(-nu) I_nu(z), finite at z = 0 (overflows to inf past z ~ 700)."""
    nu, arr = _prepare(order, z)
    with np.errstate(over="ignore"):
        out = bessel_i_scaled_exp(nu, arr) * np.exp(arr)
    return _finish(np.asarray(out).reshape(arr.shape), z)


def bessel_i_exp_scaled(order, z):
    """exp(-z) I_nu(z), overflow-safe for arguments up to 1e6 and beyond.

    Examples
    --------
    >>> bessel_i_exp_scaled(0.0, 0.0)
    1.0
    """
    nu, arr = _prepare(order, z)
    flat = arr.reshape(-1)
    core = bessel_i_scaled_exp(nu, flat)
    out = np.empty_like(flat)
    pos = flat > 0
    out[pos] = core[pos] * flat[pos] ** nu
    if nu > 0:
        out[~pos] = 0.0
    elif nu == 0:
        out[~pos] = 1.0
    else:
        out[~pos] = np.inf
    return _finish(out.reshape(arr.shape), z)

