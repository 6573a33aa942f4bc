"""Gevrey bump chi_0 and its derivatives.

chi_0(t) = E(1 - t^2) / (E(1 - t^2) + E(t^2 - 1/4)),   E(s) = exp(-c s^{-p}) for s > 0,

with p = 1/(N' - 1). It equals 1 on |t| <= 1/2, vanishes for |t| >= 1, and
inherits the Gevrey-N' class of exp(-s^{-p}). The quotient is the transition
blend that pins the plateau.

Derivatives up to order 12 come from truncated Taylor arithmetic (jets), which
is exact up to rounding. Chebyshev spectral differentiation is kept as an
independent check for low orders; at order 12 it would amplify rounding by
roughly N^24 and is unusable in double precision.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import GrowthRangeError, InvalidParameterError

MAX_ORDER = 12


# --------------------------------------------------------------------------- jets
# A jet is an array J of shape (order + 1, npts) with J[k] = f^(k)(t) / k!.


def jet_variable(t: np.ndarray, order: int) -> np.ndarray:
    J = np.zeros((order + 1, len(t)))
    J[0] = t
    if order >= 1:
        J[1] = 1.0
    return J


def jet_mul(a, b):
    out = np.zeros_like(a)
    for k in range(len(a)):
        out[k] = np.sum(a[: k + 1] * b[k::-1], axis=0)
    return out


def jet_div(a, b):
    out = np.zeros_like(a)
    for k in range(len(a)):
        acc = a[k] - np.sum(b[1 : k + 1] * out[k - 1 :: -1][:k], axis=0) if k else a[0]
        out[k] = acc / b[0]
    return out


def jet_exp(a):
    out = np.zeros_like(a)
    out[0] = np.exp(a[0])
    for k in range(1, len(a)):
        j = np.arange(1, k + 1)[:, None]
        out[k] = np.sum(j * a[1 : k + 1] * out[k - 1 :: -1][:k], axis=0) / k
    return out


def jet_pow(a, r: float):
    """a^r for a[0] > 0, from the recurrence a y' = r a' y."""
    out = np.zeros_like(a)
    out[0] = a[0] ** r
    for k in range(1, len(a)):
        j = np.arange(1, k + 1)[:, None]
        out[k] = np.sum((r * j - (k - j)) * a[1 : k + 1] * out[k - 1 :: -1][:k], axis=0) / (k * a[0])
    return out


def _flat_exp_jet(s, p: float, sharpness: float):
    """Jet of E(s) = exp(-c s^{-p}), identically zero where s <= 0 or E underflows."""
    out = np.zeros_like(s)
    pos = s[0] > 0
    if np.any(pos):
        sp = s[:, pos]
        g = -sharpness * jet_pow(sp, -p)
        alive = g[0] > -700.0
        e = np.zeros_like(sp)
        if np.any(alive):
            e[:, alive] = jet_exp(g[:, alive])
        out[:, pos] = e
    return out


def _check_index(gevrey_index: float) -> None:
    if not 1.0 < gevrey_index < 2.0:
        raise InvalidParameterError(f"Gevrey index N' = {gevrey_index} outside (1, 2)")


def gevrey_bump(gevrey_index: float, t, order: int = MAX_ORDER, sharpness: float = 1.0) -> np.ndarray:
    """Derivatives d^k chi_0 / dt^k, k = 0..order, at points t. Shape (order+1, len(t))."""
    _check_index(gevrey_index)
    if sharpness <= 0:
        raise InvalidParameterError("sharpness must be positive")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    p = 1.0 / (gevrey_index - 1.0)
    T = jet_variable(t, order)
    T2 = jet_mul(T, T)
    one = np.zeros_like(T)
    one[0] = 1.0
    e1 = _flat_exp_jet(one - T2, p, sharpness)
    e2 = _flat_exp_jet(T2 - 0.25 * one, p, sharpness)
    den = e1 + e2
    # den > 0 on |t| < 1; outside the bump chi_0 and all derivatives vanish
    out = np.zeros_like(T)
    inside = den[0] > 0
    out[:, inside] = jet_div(e1[:, inside], den[:, inside])
    factorials = np.array([math.factorial(k) for k in range(order + 1)], dtype=float)
    return out * factorials[:, None]


def chi0(t, gevrey_index: float = 1.5, sharpness: float = 1.0) -> np.ndarray:
    return gevrey_bump(gevrey_index, t, order=0, sharpness=sharpness)[0]


def chebyshev_derivatives(gevrey_index: float, n_points: int = 128, order: int = 3, sharpness: float = 1.0):
    """Spectral derivatives of chi_0 on a Chebyshev-Lobatto grid (low orders only)."""
    k = np.arange(n_points + 1)
    x = np.cos(np.pi * k / n_points)
    c = np.ones(n_points + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** k
    X = x[:, None] - x[None, :]
    D = np.outer(c, 1.0 / c) / (X + np.eye(n_points + 1))
    D -= np.diag(D.sum(axis=1))
    vals = [chi0(x, gevrey_index, sharpness)]
    for _ in range(order):
        vals.append(D @ vals[-1])
    return x, np.array(vals)


def derivative_growth_exponent(gevrey_index: float, order: int = MAX_ORDER, n_grid: int = 4001,
                               sharpness: float = 1.0):
    """Fit log sup|chi_0^(k)| = const + k log c + e log k!, k = 1..order; return (e, log c, const)."""
    t = np.linspace(-1.0, 1.0, n_grid)
    d = gevrey_bump(gevrey_index, t, order, sharpness)
    k = np.arange(1, order + 1)
    sup = np.abs(d[1:]).max(axis=1)
    if not np.all(sup > 0):
        raise GrowthRangeError(f"derivatives of chi_0 underflow for N' = {gevrey_index}", partial=sup)
    y = np.log(sup)
    logfact = np.array([math.lgamma(j + 1) for j in k])
    X = np.column_stack([np.ones_like(k, dtype=float), k, logfact])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return float(coef[2]), float(coef[1]), float(coef[0])
