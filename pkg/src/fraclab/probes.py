"""Mollifier sources and the zeta function zeta_f(z, x) = sum_{k>=1} lambda_k^z (pi_k f)(x).

Two routes:
  * oracle   - the spectral sum over the model's eigenblocks (ground truth);
  * measured - local iterated Laplacians plus the black-box source-to-solution
               map, never touching the hidden spectrum.
At b = m the measured value is (-Delta)^m f; at b = m - alpha it is
L((-Delta)^m f).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import GrowthRangeError, InvalidParameterError, LocalityError, SupportError
from .forward import SourceFunction, iterated_laplacian_local
from .gevrey import chi0
from .model import ObservationRegion, SpectralModel

MAX_AUDIT_ORDER = 10


# --------------------------------------------------------------------------- mollifiers


@dataclass(frozen=True)
class MollifierSpec:
    center: int  # global node id of an observed interior node
    radius: float
    gevrey_index: float = 1.5
    sharpness: float = 1.0


def _chart_distance(region: ObservationRegion, i, j):
    n = region.n_nodes
    d = np.abs(np.asarray(i) - np.asarray(j)) % n
    return np.minimum(d, n - d) * region.spacing


def max_radius(region: ObservationRegion, center: int) -> float:
    """delta_0(q): distance from q to the nearest node outside the interior."""
    outside = np.setdiff1d(np.arange(region.n_nodes), region.interior_idx)
    return float(_chart_distance(region, center, outside).min())


def mollifier_source(region: ObservationRegion, spec: MollifierSpec, label: str | None = None) -> SourceFunction:
    """F_{q,delta}(x) = delta^{-n} chi_0(|x - q| / delta) on observed interior nodes (n = 1)."""
    if spec.center not in set(region.interior_idx.tolist()):
        raise SupportError(f"center {spec.center} is not an interior node")
    if not region.gevrey_index < spec.gevrey_index < 2.0:
        raise InvalidParameterError(
            f"N' = {spec.gevrey_index} must lie in ({region.gevrey_index}, 2) for this region")
    if not 0 < spec.radius < max_radius(region, spec.center):
        raise SupportError(f"radius {spec.radius} not below delta_0 = {max_radius(region, spec.center):.4g}")
    values = np.zeros(region.n_nodes)
    t = _chart_distance(region, region.interior_idx, spec.center) / spec.radius
    values[region.interior_idx] = chi0(t, spec.gevrey_index, spec.sharpness) / spec.radius
    return SourceFunction(values=values, label=label or f"F[q={spec.center},d={spec.radius:g}]")


def mollifier_mass(gevrey_index: float = 1.5, sharpness: float = 1.0) -> float:
    """1/c_0 = integral of chi_0 over [-1, 1]."""
    from scipy.integrate import quad

    val, _ = quad(lambda s: chi0(np.array([s]), gevrey_index, sharpness)[0], -1, 1, points=[-0.5, 0.5], limit=200)
    return float(val)


# --------------------------------------------------------------------------- schedule


@dataclass(frozen=True)
class MomentSchedule:
    """b_{2m-1} = m - alpha, b_{2m} = m for m = 1..max_m (1-based index k)."""

    alpha: float
    max_m: int

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise InvalidParameterError(f"alpha = {self.alpha} outside (0, 1)")
        if self.max_m < 1:
            raise InvalidParameterError("max_m must be positive")

    @property
    def size(self) -> int:
        return 2 * self.max_m

    @property
    def exponents(self) -> np.ndarray:
        m = np.repeat(np.arange(1, self.max_m + 1), 2).astype(float)
        m[0::2] -= self.alpha
        return m

    def exponent(self, k: int) -> float:
        m = (k + 1) // 2
        return m - self.alpha if k % 2 else float(m)

    @staticmethod
    def order(k: int) -> int:
        return (k + 1) // 2

    @staticmethod
    def is_integer_point(k: int) -> bool:
        return k % 2 == 0

    @property
    def gap(self) -> float:
        """Smallest spacing; equals min(alpha, 1 - alpha) once max_m >= 2."""
        return float(np.diff(self.exponents).min())


def kappa(z: complex, dimension_n: int = 1) -> int:
    """Truncation order: ceil(Re z) + n + 1 for Re z >= 0, else n + 1."""
    re = complex(z).real
    return (math.ceil(re) if re >= 0 else 0) + dimension_n + 1


# --------------------------------------------------------------------------- zeta


@dataclass(frozen=True)
class ZetaInfo:
    modes_used: int  # number of distinct eigenvalues k >= 1 summed
    tail_bound: float
    truncated: bool


def _power(lam: np.ndarray, z: complex) -> np.ndarray:
    z = complex(z)
    if z.imag == 0:
        return lam ** z.real
    return np.exp(z * np.log(lam))


def zeta_oracle(model: SpectralModel, f, z: complex, x, tail_tol: float = 0.0, max_modes: int | None = None,
                return_info: bool = False):
    """Spectral sum for zeta_f(z, x) with a rigorous stopping rule.

    Clusters k = 1..mu are summed, where mu is the first index at which the
    Cauchy-Schwarz tail bound
        ||A^kappa f|| * sum_{k > mu} lambda_k^{Re z - kappa} sum_l |phi_{k,l}(x)|
    drops to tail_tol (kappa = kappa(z)). ``x`` is a node id or array of ids.
    ``max_modes`` caps the number of distinct eigenvalues available; if the
    bound is still above tail_tol at the cap, a truncation warning is issued.
    """
    f = np.asarray(getattr(f, "values", f), dtype=float)
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=int))
    lam_all = model.distinct_eigenvalues[1:]
    blocks = model.eigenblocks[1:]
    n_avail = len(lam_all) if max_modes is None else min(max_modes, len(lam_all))

    kap = kappa(z, model.dimension_n)
    coef = model.coefficients(f)
    norm_ak = math.sqrt(float(np.sum((model.mode_eigenvalues**kap * coef) ** 2)))
    re = complex(z).real
    phi_abs = np.array([np.abs(b[x]).sum(axis=1).max() for b in blocks])
    per_cluster = norm_ak * lam_all ** (re - kap) * phi_abs
    tail = np.concatenate([np.cumsum(per_cluster[::-1])[::-1], [0.0]])  # tail[mu] = sum_{k > mu}
    mu = n_avail
    for j in range(n_avail + 1):
        if tail[j] <= tail_tol:
            mu = j
            break
    bound = float(tail[mu]) if mu < len(tail) else 0.0
    truncated = bound > tail_tol
    if truncated:
        warnings.warn(f"zeta_oracle: tail bound {bound:.3g} above tail_tol at mode cutoff {mu}", RuntimeWarning)

    powers = _power(lam_all[:mu], z)
    vals = np.zeros(x.size, dtype=complex)
    start = 1
    for k in range(mu):
        b = blocks[k]
        d = b.shape[1]
        vals += powers[k] * (b[x] @ coef[start:start + d])
        start += d
    out = complex(vals[0]) if scalar else vals
    info = ZetaInfo(modes_used=mu, tail_bound=bound, truncated=truncated)
    if return_info:
        return out, info
    return out


def zeta_oracle_observed(model: SpectralModel, region: ObservationRegion, f, z: complex, tail_tol: float = 0.0):
    """zeta_oracle at every observed node, ordered like observed vectors."""
    return zeta_oracle(model, f, z, region.observed_idx, tail_tol)


class ZetaSeries:
    """zeta_f(z, x) = sum_k lambda_k^z t_k(x) with the traces t_k = (pi_k f)(x) precomputed."""

    def __init__(self, model: SpectralModel, f, x):
        f = np.asarray(getattr(f, "values", f), dtype=float)
        self.x = np.atleast_1d(np.asarray(x, dtype=int))
        self.lam = np.asarray(model.distinct_eigenvalues[1:])
        self.traces = np.array([b[self.x] @ (b.T @ (model.weights * f)) for b in model.eigenblocks[1:]])

    def __call__(self, z) -> np.ndarray:
        """Values at the nodes x for each z; shape (len(z), len(x)) or (len(x),) for scalar z."""
        zz = np.atleast_1d(np.asarray(z, dtype=complex))
        powers = np.exp(zz[:, None] * np.log(self.lam)[None, :])
        out = powers @ self.traces
        return out[0] if np.ndim(z) == 0 else out

    def abs_series(self, re_z) -> np.ndarray:
        """sum_k lambda_k^{Re z} |t_k(x)|."""
        rr = np.atleast_1d(np.asarray(re_z, dtype=float))
        out = (self.lam[None, :] ** rr[:, None]) @ np.abs(self.traces)
        return out[0] if np.ndim(re_z) == 0 else out


def zeta_abs_series(model: SpectralModel, f, re_z: float, x) -> np.ndarray:
    """sum_k lambda_k^{Re z} |(pi_k f)(x)|, the absolute series bounding |zeta|."""
    f = np.asarray(getattr(f, "values", f), dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=int))
    out = np.zeros(x.size)
    for lam, b in zip(model.distinct_eigenvalues[1:], model.eigenblocks[1:]):
        out += lam**re_z * np.abs(b[x] @ (b.T @ (model.weights * f)))
    return out


def zeta_measured(region: ObservationRegion, forward_map, alpha: float, f, k: int) -> np.ndarray:
    """Measurement-side zeta_f(b_k, .) on O from local data and the black-box map."""
    if k < 1:
        raise InvalidParameterError("schedule index k starts at 1")
    m = MomentSchedule.order(k)
    v = iterated_laplacian_local(region, f, m)
    if MomentSchedule.is_integer_point(k):
        return v
    if np.any(v[~region.interior_mask] != 0):
        raise LocalityError(f"(-Delta)^{m} f reaches the boundary; fractional point needs a margin of {m + 1}")
    return np.asarray(forward_map(v))


# --------------------------------------------------------------------------- tables


@dataclass
class MomentTable:
    schedule: MomentSchedule
    source_ids: list
    nodes: np.ndarray  # observed node ids
    values: np.ndarray  # complex, (S, 2 max_m, |O|); NaN marks a missing entry
    provenance: np.ndarray = field(default=None)  # str, (S, 2 max_m)

    def __post_init__(self):
        if self.provenance is None:
            self.provenance = np.full(self.values.shape[:2], "", dtype=object)

    @property
    def n_sources(self) -> int:
        return len(self.source_ids)

    def to_csv(self, path) -> None:
        b = self.schedule.exponents
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["source_id", "k", "b_k", "node", "re_value", "im_value", "provenance"])
            for s, sid in enumerate(self.source_ids):
                for k in range(self.schedule.size):
                    for j, node in enumerate(self.nodes):
                        v = self.values[s, k, j]
                        w.writerow([sid, k + 1, repr(float(b[k])), int(node), repr(float(v.real)),
                                    repr(float(v.imag)), self.provenance[s, k]])

    @classmethod
    def from_csv(cls, path, alpha: float) -> "MomentTable":
        rows = list(csv.DictReader(open(path)))
        sids = list(dict.fromkeys(r["source_id"] for r in rows))
        nodes = np.array(sorted({int(r["node"]) for r in rows}))
        kmax = max(int(r["k"]) for r in rows)
        sched = MomentSchedule(alpha, (kmax + 1) // 2)
        vals = np.full((len(sids), sched.size, len(nodes)), np.nan, dtype=complex)
        prov = np.full((len(sids), sched.size), "", dtype=object)
        spos = {s: i for i, s in enumerate(sids)}
        npos = {n: i for i, n in enumerate(nodes)}
        for r in rows:
            s, k = spos[r["source_id"]], int(r["k"]) - 1
            vals[s, k, npos[int(r["node"])]] = float(r["re_value"]) + 1j * float(r["im_value"])
            prov[s, k] = r["provenance"]
        return cls(sched, sids, nodes, vals, prov)


def measured_moment_table(region: ObservationRegion, forward_map, alpha: float, sources, max_m: int,
                          fractional_only: bool = False) -> MomentTable:
    """Moment table from the measurement-only path."""
    sched = MomentSchedule(alpha, max_m)
    sources = list(sources)
    vals = np.full((len(sources), sched.size, region.n_observed), np.nan, dtype=complex)
    prov = np.full(vals.shape[:2], "", dtype=object)
    for s, f in enumerate(sources):
        for k in range(1, sched.size + 1):
            if fractional_only and sched.is_integer_point(k):
                continue
            vals[s, k - 1] = zeta_measured(region, forward_map, alpha, f, k)
            prov[s, k - 1] = "measured"
    ids = [getattr(f, "label", f"f{s}") for s, f in enumerate(sources)]
    return MomentTable(sched, ids, region.observed_idx.copy(), vals, prov)


def oracle_moment_table(model: SpectralModel, region: ObservationRegion, alpha: float, sources, max_m: int,
                        tail_tol: float = 0.0) -> MomentTable:
    """Moment table from the exact spectrum."""
    sched = MomentSchedule(alpha, max_m)
    sources = list(sources)
    vals = np.empty((len(sources), sched.size, region.n_observed), dtype=complex)
    for s, f in enumerate(sources):
        for k in range(1, sched.size + 1):
            vals[s, k - 1] = zeta_oracle(model, f, sched.exponent(k), region.observed_idx, tail_tol)
    prov = np.full(vals.shape[:2], "oracle", dtype=object)
    ids = [getattr(f, "label", f"f{s}") for s, f in enumerate(sources)]
    return MomentTable(sched, ids, region.observed_idx.copy(), vals, prov)


def table_agreement(measured: MomentTable, oracle: MomentTable) -> np.ndarray:
    """max_x |measured - oracle| / (1 + max_x |oracle|) per (source, exponent)."""
    diff = np.abs(measured.values - oracle.values).max(axis=2)
    scale = 1.0 + np.abs(oracle.values).max(axis=2)
    return diff / scale


# --------------------------------------------------------------------------- growth audit


@dataclass(frozen=True)
class GrowthFit:
    C: float
    exponent: float
    intercept: float
    residual: float
    norms: np.ndarray  # ||(-Delta)^m F||_inf for m = 0..max_m


def growth_audit(region: ObservationRegion, spec: MollifierSpec, max_m: int) -> GrowthFit:
    """Fit log ||(-Delta)^m F||_inf = b + m log C + e log((2m)!) over m = 1..max_m."""
    if not 1 <= max_m <= MAX_AUDIT_ORDER:
        raise InvalidParameterError(f"max_m must lie in 1..{MAX_AUDIT_ORDER}")
    F = mollifier_source(region, spec)
    norms = []
    v = region.as_observed(F.values)
    for m in range(max_m + 1):
        if m:
            v = iterated_laplacian_local(region, v, 1)
        nrm = float(np.abs(v).max())
        if not np.isfinite(nrm):
            raise GrowthRangeError(f"overflow at m = {m}", partial=np.array(norms))
        norms.append(nrm)
    norms = np.array(norms)
    m = np.arange(1, max_m + 1)
    y = np.log(norms[1:])
    X = np.column_stack([np.ones(max_m), m, [math.lgamma(2 * j + 1) for j in m]])
    if max_m < 3:
        raise InvalidParameterError("need max_m >= 3 to fit three constants")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    res = float(np.sqrt(np.mean((X @ coef - y) ** 2)))
    return GrowthFit(C=float(np.exp(coef[1])), exponent=float(coef[2]), intercept=float(coef[0]),
                     residual=res, norms=norms)
