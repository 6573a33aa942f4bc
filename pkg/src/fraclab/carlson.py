"""Numerical checks of the Carlson/Pila hypotheses on zeta-difference functions.

(H1) |h(iy)| bounded on the imaginary axis;
(H2) |h(x)| <= c e^{2 tau x log x} on the positive axis, tau < 1;
(H3) sub-double-exponential growth in the right half plane, checked only on a
     grid with |z| <= 15 because larger |z| overflows.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import GrowthRangeError
from .model import SpectralModel
from .probes import MomentSchedule, ZetaSeries

GRID_RADIUS = 15.0
TAU_RESIDUAL_MAX = 0.2


@dataclass
class CarlsonFit:
    c1_imag: float
    tau: float | None  # None when the fit is not trustworthy
    tau_residual: float
    gap: float | None
    sup_grid: float

    def to_dict(self) -> dict:
        return asdict(self)


def _sample(h, z: np.ndarray) -> np.ndarray:
    return np.array([complex(h(complex(v))) for v in np.ravel(z)]).reshape(np.shape(z))


def half_plane_grid(radius: float = GRID_RADIUS, n: int = 31) -> np.ndarray:
    x = np.linspace(0.0, radius, n)
    y = np.linspace(-radius, radius, 2 * n - 1)
    Z = x[None, :] + 1j * y[:, None]
    return Z[np.abs(Z) <= radius]


def fit_growth(h, x_max: float = 12.0, y_max: float = 10.0, schedule: MomentSchedule | None = None,
               n_samples: int = 41) -> CarlsonFit:
    """Sample |h| on the imaginary axis, the real axis x in [2, x_max], and a half-plane grid."""
    partial = {}
    y = np.linspace(-y_max, y_max, 2 * n_samples - 1)
    hi = np.abs(_sample(h, 1j * y))
    partial["imag"] = hi
    x = np.linspace(2.0, x_max, n_samples)
    hx = np.abs(_sample(h, x.astype(complex)))
    partial["real"] = hx
    grid = np.abs(_sample(h, half_plane_grid()))
    partial["grid"] = grid
    if not all(np.all(np.isfinite(v)) for v in partial.values()):
        raise GrowthRangeError("non-finite samples of h", partial=partial)

    tau, res = None, math.inf
    if np.all(hx > 0):
        X = np.column_stack([2 * x * np.log(x), np.ones_like(x)])
        coef, *_ = np.linalg.lstsq(X, np.log(hx), rcond=None)
        res = float(np.sqrt(np.mean((X @ coef - np.log(hx)) ** 2)))
        if res < TAU_RESIDUAL_MAX:
            tau = float(coef[0])
    return CarlsonFit(c1_imag=float(hi.max()), tau=tau, tau_residual=res,
                      gap=schedule.gap if schedule is not None else None, sup_grid=float(grid.max()))


def check_vanishing(h, schedule: MomentSchedule, tol: float, sup_grid: float | None = None, scale=None) -> dict:
    """Verdict on whether h vanishes on the schedule and on the half-plane grid.

    ``scale`` (callable z -> positive number) turns tol into a relative tolerance.
    """
    sc = scale or (lambda z: 1.0)
    b = schedule.exponents
    at_b = np.array([abs(h(complex(v))) / sc(complex(v)) for v in b])
    if sup_grid is None:
        grid = half_plane_grid()
        sup_grid = float(max(abs(h(complex(z))) / sc(complex(z)) for z in grid))
    max_b = float(at_b.max())
    if max_b <= tol:
        verdict = "consistent-with-zero" if sup_grid <= 10 * tol else "separating"
    else:
        verdict = "nonvanishing"
    frac, integ = at_b[0::2], at_b[1::2]
    return {"max_abs_at_schedule": max_b, "max_fractional": float(frac.max()),
            "max_integer": float(integ.max()), "sup_grid": float(sup_grid), "verdict": verdict}


def zeta_difference(model_a: SpectralModel, model_b: SpectralModel, f, x: int):
    """z -> zeta^a_f(z, x) - zeta^b_f(z, x) from the two exact spectra."""

    za, zb = ZetaSeries(model_a, f, x), ZetaSeries(model_b, f, x)

    def h(z):
        return complex(za(z)[0] - zb(z)[0])

    return h


def zeta_scale(model: SpectralModel, f, x: int):
    """z -> sum_k lambda_k^{Re z} |(pi_k f)(x)|: the natural magnitude of zeta_f(z, x)."""

    zs = ZetaSeries(model, f, x)

    def scale(z):
        return float(zs.abs_series(complex(z).real)[0])

    return scale
