"""Discrete circle models of a closed 1D Riemannian manifold.

A metric g = a(x) dx^2 on a periodic chart [0, L) is sampled on a uniform grid.
The Laplace-Beltrami operator -Delta = -a^{-1/2} d/dx (a^{-1/2} d/dx) becomes
the weighted pencil (K, W) with

    K = D^T diag(c / h) D,   c_{i+1/2} = ((a_i + a_{i+1}) / 2)^{-1/2},
    W = diag(sqrt(a_i) h),

so -Delta u = W^{-1} K u. K is symmetric, which gives a real eigenbasis that is
orthonormal in the weighted inner product (u, v) = sum_i w_i u_i v_i.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import linalg

from .errors import InvalidModelError, InvalidRegionError, ResolutionError

MIN_NODES = 8
DEFAULT_CLUSTER_TOL = 1e-6
BLEND_NODES = 5

Profile = Callable[[np.ndarray], np.ndarray]


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpectralModel:
    """Immutable discrete manifold with its exact (clustered) spectrum.

    ``metric`` holds the full ground-truth profile, hidden part included. Only
    oracle code and the forward map read it; recovery code works from an
    ObservationRegion and a forward-map accessor.
    """

    coordinates: np.ndarray
    metric: np.ndarray
    spacing: float
    weights: np.ndarray
    edge_coefficients: np.ndarray  # c for the edge (i, i+1 mod n)
    stiffness: np.ndarray
    distinct_eigenvalues: np.ndarray
    multiplicities: np.ndarray
    eigenblocks: tuple
    dimension_n: int = 1
    trusted_modes: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.coordinates)

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_nodes)

    @property
    def total_volume(self) -> float:
        return float(self.weights.sum())

    @property
    def circumference(self) -> float:
        return self.spacing * self.n_nodes

    @property
    def n_distinct(self) -> int:
        return len(self.distinct_eigenvalues)

    @cached_property
    def mode_eigenvalues(self) -> np.ndarray:
        """Eigenvalue per individual mode (distinct values repeated by multiplicity)."""
        return _frozen(np.repeat(self.distinct_eigenvalues, self.multiplicities))

    @cached_property
    def mode_vectors(self) -> np.ndarray:
        """All eigenvectors as columns, ordered like ``mode_eigenvalues``."""
        return _frozen(np.hstack(self.eigenblocks))

    @cached_property
    def mode_cluster(self) -> np.ndarray:
        """Distinct-eigenvalue index of every mode."""
        return _frozen(np.repeat(np.arange(self.n_distinct), self.multiplicities), int)

    @cached_property
    def trusted_distinct(self) -> int:
        """Number of distinct eigenvalues whose modes all lie in the trusted range."""
        cum = np.cumsum(self.multiplicities)
        return int(np.searchsorted(cum, self.trusted_modes, side="right"))

    def neighbors(self, i: int) -> tuple[int, int]:
        n = self.n_nodes
        return (i - 1) % n, (i + 1) % n

    def edge_coefficient(self, i: int, j: int) -> float:
        n = self.n_nodes
        if (i + 1) % n == j:
            return float(self.edge_coefficients[i])
        if (j + 1) % n == i:
            return float(self.edge_coefficients[j])
        raise ValueError(f"nodes {i} and {j} are not adjacent")

    def apply_laplacian(self, u: np.ndarray) -> np.ndarray:
        """(-Delta) u = W^{-1} K u."""
        u = np.asarray(u)
        w = self.weights[:, None] if u.ndim == 2 else self.weights
        return (self.stiffness @ u) / w

    def inner(self, u: np.ndarray, v: np.ndarray) -> complex:
        return np.sum(self.weights * u * np.conj(v))

    def mean(self, u: np.ndarray) -> float:
        return float(np.sum(self.weights * u) / self.total_volume)

    def coefficients(self, u: np.ndarray) -> np.ndarray:
        """Coefficients of u in the mode basis: Phi^T W u."""
        u = np.asarray(u)
        w = self.weights[:, None] if u.ndim == 2 else self.weights
        return self.mode_vectors.T @ (w * u)

    def projection(self, k: int, u: np.ndarray) -> np.ndarray:
        """pi_k u = Phi_k Phi_k^T W u."""
        block = self.eigenblocks[k]
        return block @ (block.T @ (self.weights * u))

    def projector(self, k: int) -> np.ndarray:
        block = self.eigenblocks[k]
        return block @ (block.T * self.weights)

    def counting_function(self, lam: float) -> int:
        """Number of eigenvalues strictly below lam, with multiplicity."""
        return int(np.sum(self.mode_eigenvalues < lam))

    def energy(self, u: np.ndarray) -> float:
        """Quadratic form u^T K u evaluated edge by edge (accurate for smooth u)."""
        diff = np.roll(u, -1) - u
        return float(np.sum(self.edge_coefficients * diff * diff) / self.spacing)

    def export_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["node", "coordinate", "weight", "metric"])
            for i in range(self.n_nodes):
                writer.writerow([i, repr(float(self.coordinates[i])), repr(float(self.weights[i])),
                                 repr(float(self.metric[i]))])


@dataclass(frozen=True, eq=False)
class ObservationRegion:
    """What an observer knows: node labels, stencil topology, metric on O only.

    ``observed_idx`` (interior and boundary, ascending) fixes the ordering of
    every observed vector. ``normal_orientation[b]`` is +1 when the hidden
    neighbour of boundary node b is b+1 and -1 when it is b-1, so the normal
    points out of O, into the hidden region.
    """

    n_nodes: int
    spacing: float
    interior_idx: np.ndarray
    boundary_idx: np.ndarray
    hidden_idx: np.ndarray
    local_metric: np.ndarray  # aligned with observed_idx
    normal_orientation: np.ndarray  # aligned with boundary_idx
    gevrey_index: float = 1.0

    @cached_property
    def observed_idx(self) -> np.ndarray:
        return _frozen(np.union1d(self.interior_idx, self.boundary_idx), int)

    @property
    def n_observed(self) -> int:
        return len(self.observed_idx)

    @cached_property
    def local_weights(self) -> np.ndarray:
        return _frozen(np.sqrt(self.local_metric) * self.spacing)

    @cached_property
    def position(self) -> np.ndarray:
        """Map global node id -> position in observed vectors (-1 if hidden)."""
        pos = np.full(self.n_nodes, -1, dtype=int)
        pos[self.observed_idx] = np.arange(self.n_observed)
        pos.setflags(write=False)
        return pos

    @cached_property
    def interior_mask(self) -> np.ndarray:
        """Observed-vector mask of interior nodes."""
        return _frozen(np.isin(self.observed_idx, self.interior_idx), bool)

    @cached_property
    def boundary_pos(self) -> np.ndarray:
        return _frozen(self.position[self.boundary_idx], int)

    def neighbors(self, i: int) -> tuple[int, int]:
        return (i - 1) % self.n_nodes, (i + 1) % self.n_nodes

    def local_edge_coefficient(self, i: int, j: int) -> float:
        """Stencil coefficient of an edge whose two ends are both observed."""
        pi, pj = self.position[i], self.position[j]
        if pi < 0 or pj < 0:
            raise InvalidRegionError(f"edge ({i}, {j}) leaves the observation region")
        return float(((self.local_metric[pi] + self.local_metric[pj]) / 2.0) ** -0.5)

    def restrict(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u)[self.observed_idx]

    def extend(self, v: np.ndarray) -> np.ndarray:
        """Zero-extend an observed vector to the full node set."""
        v = np.asarray(v)
        out = np.zeros(self.n_nodes, dtype=v.dtype)
        out[self.observed_idx] = v
        return out

    def as_observed(self, f: np.ndarray) -> np.ndarray:
        """Accept a full-length or observed-length source; return the observed part.

        A full-length vector must vanish on hidden nodes.
        """
        from .errors import SupportError

        f = np.asarray(getattr(f, "values", f))
        if f.shape == (self.n_observed,):
            return f
        if f.shape == (self.n_nodes,):
            if np.any(f[self.hidden_idx] != 0):
                raise SupportError("source has nonzero values on hidden nodes")
            return f[self.observed_idx]
        raise ValueError(f"vector of length {f.shape} matches neither O nor the node set")

    def local_mean(self, v: np.ndarray) -> complex:
        return np.sum(self.local_weights * v) / np.sum(self.local_weights)

    @property
    def observed_volume(self) -> float:
        """Volume of O from local data alone."""
        return float(self.local_weights.sum())


# --------------------------------------------------------------------------- profiles


def flat_profile(x):
    return np.ones_like(np.asarray(x, dtype=float))


def gevrey_bump_profile(amplitude: float, center: float, width: float, circumference: float,
                        gevrey_index: float = 1.25) -> Profile:
    """1 + amplitude * exp(1 - (1 - t^2)^{-p}), t the periodic distance over width.

    exp(-s^{-p}) is Gevrey of index 1 + 1/p, so p = 1 / (gevrey_index - 1).
    """
    if not 1.0 < gevrey_index < 2.0:
        raise InvalidModelError("bump gevrey_index must lie in (1, 2)")
    p = 1.0 / (gevrey_index - 1.0)

    def profile(x):
        x = np.asarray(x, dtype=float)
        d = (x - center + circumference / 2) % circumference - circumference / 2
        t = d / width
        out = np.zeros_like(t)
        inside = np.abs(t) < 1
        out[inside] = np.exp(1.0 - (1.0 - t[inside] ** 2) ** (-p))
        return 1.0 + amplitude * out

    profile.gevrey_index = gevrey_index
    return profile


def fourier_profile(cos: dict | list, sin: dict | list, circumference: float, offset: float = 1.0) -> Profile:
    """offset + sum_j cos_j cos(2 pi j x / L) + sin_j sin(2 pi j x / L)."""

    def as_dict(c):
        if isinstance(c, dict):
            return {int(k): float(v) for k, v in c.items()}
        return {j + 1: float(v) for j, v in enumerate(c)}

    cos, sin = as_dict(cos), as_dict(sin)

    def profile(x):
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, offset)
        for j, c in cos.items():
            out += c * np.cos(2 * np.pi * j * x / circumference)
        for j, s in sin.items():
            out += s * np.sin(2 * np.pi * j * x / circumference)
        return out

    profile.gevrey_index = 1.0
    return profile


def profile_from_spec(spec: dict | None, circumference: float) -> Profile:
    spec = spec or {"kind": "flat"}
    kind = spec.get("kind", "flat")
    params = spec.get("params", {}) or {}
    if kind == "flat":
        return flat_profile
    if kind == "bump":
        return gevrey_bump_profile(
            amplitude=float(params.get("amplitude", 0.3)),
            center=float(params.get("center", circumference / 2)),
            width=float(params.get("width", circumference / 8)),
            circumference=circumference,
            gevrey_index=float(params.get("gevrey_index", 1.25)),
        )
    if kind == "fourier":
        return fourier_profile(params.get("cos", {}), params.get("sin", {}), circumference,
                               float(params.get("offset", 1.0)))
    raise InvalidModelError(f"unknown profile kind {kind!r}")


# --------------------------------------------------------------------------- construction


def cluster_eigenvalues(raw_eigenvalues, raw_vectors, rel_gap_tol: float = DEFAULT_CLUSTER_TOL, weights=None):
    """Merge nearly equal eigenvalues into distinct values with eigenblocks.

    Consecutive values join a cluster while the gap is below tol * (1 + |lambda|).
    Blocks are re-orthonormalized in the weighted inner product.
    """
    lam = np.asarray(raw_eigenvalues, dtype=float)
    vec = np.asarray(raw_vectors, dtype=float)
    if vec.ndim == 1:
        vec = vec[:, None]
    if not 0 < rel_gap_tol < 0.5:
        raise ValueError("rel_gap_tol must lie in (0, 0.5)")
    w = np.ones(vec.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    sw = np.sqrt(w)

    starts = [0]
    for i in range(1, len(lam)):
        if lam[i] - lam[i - 1] >= rel_gap_tol * (1 + abs(lam[i])):
            starts.append(i)
    bounds = list(zip(starts, starts[1:] + [len(lam)]))

    values, mults, blocks = [], [], []
    for a, b in bounds:
        values.append(lam[a:b].mean())
        mults.append(b - a)
        q, _ = np.linalg.qr(sw[:, None] * vec[:, a:b])
        blocks.append(_frozen(q / sw[:, None]))
    return np.array(values), np.array(mults, dtype=int), tuple(blocks)


def _assemble(metric: np.ndarray, h: float):
    n = len(metric)
    c = ((metric + np.roll(metric, -1)) / 2.0) ** -0.5
    idx = np.arange(n)
    nxt = (idx + 1) % n
    K = np.zeros((n, n))
    np.add.at(K, (idx, idx), c / h)
    np.add.at(K, (nxt, nxt), c / h)
    np.add.at(K, (idx, nxt), -c / h)
    np.add.at(K, (nxt, idx), -c / h)
    w = np.sqrt(metric) * h
    return K, w, c


def _model_from_metric(metric, circumference, rel_gap_tol, trusted_fraction, metadata=None) -> SpectralModel:
    metric = np.asarray(metric, dtype=float)
    n = len(metric)
    if n < MIN_NODES:
        raise ResolutionError(f"n_nodes = {n} < {MIN_NODES}")
    if not np.all(np.isfinite(metric)) or np.any(metric <= 0):
        raise InvalidModelError("metric profile must be finite and strictly positive")
    if not circumference > 0:
        raise InvalidModelError("circumference must be positive")
    h = circumference / n
    K, w, c = _assemble(metric, h)

    isw = 1.0 / np.sqrt(w)
    lam, v = linalg.eigh(isw[:, None] * K * isw[None, :])
    phi = isw[:, None] * v
    # Rayleigh quotients through the edge form are accurate to relative roundoff
    diff = np.roll(phi, -1, axis=0) - phi
    lam = np.sum(c[:, None] * diff**2, axis=0) / h / np.sum(w[:, None] * phi**2, axis=0)
    order = np.argsort(lam, kind="stable")
    lam, phi = lam[order], phi[:, order]

    values, mults, blocks = cluster_eigenvalues(lam, phi, rel_gap_tol, w)
    if mults[0] != 1:
        raise InvalidModelError("zero eigenvalue is not simple; the model is disconnected")
    values[0] = 0.0
    blocks = (_frozen(np.full((n, 1), 1.0 / np.sqrt(w.sum()))),) + blocks[1:]

    return SpectralModel(
        coordinates=_frozen(np.arange(n) * h),
        metric=_frozen(metric),
        spacing=h,
        weights=_frozen(w),
        edge_coefficients=_frozen(c),
        stiffness=_frozen(K),
        distinct_eigenvalues=_frozen(values),
        multiplicities=_frozen(mults, int),
        eigenblocks=blocks,
        dimension_n=1,
        trusted_modes=int(n * trusted_fraction),
        metadata=dict(metadata or {}),
    )


def build_circle_model(n_nodes: int, circumference: float = 2 * np.pi, metric_profile: Profile | None = None,
                       rel_gap_tol: float = DEFAULT_CLUSTER_TOL, trusted_fraction: float = 1 / 3) -> SpectralModel:
    """Circle of the given chart length with metric a(x) dx^2 sampled at x_i = i h."""
    if n_nodes < MIN_NODES:
        raise ResolutionError(f"n_nodes = {n_nodes} < {MIN_NODES}")
    profile = metric_profile or flat_profile
    x = np.arange(n_nodes) * (circumference / n_nodes)
    metric = np.broadcast_to(np.asarray(profile(x), dtype=float), x.shape)
    return _model_from_metric(metric, circumference, rel_gap_tol, trusted_fraction)


def _blend_ramp(k: int) -> np.ndarray:
    """Smooth 0 -> 1 ramp sampled at k interior points."""
    s = np.arange(1, k + 1) / (k + 1)
    return 0.5 - 0.5 * np.cos(np.pi * s)


def build_two_arc_model(n_nodes: int, observed_arc_fraction: float, observed_profile: Profile | None = None,
                        hidden_profile: Profile | None = None, circumference: float = 2 * np.pi,
                        reflect_hidden: bool = False, rel_gap_tol: float = DEFAULT_CLUSTER_TOL,
                        gevrey_index: float | None = None):
    """Circle split into an observed arc (nodes 0..n_O-1) and a hidden arc.

    On hidden nodes the metric is hidden_profile, blended into observed_profile
    over the BLEND_NODES hidden nodes next to each junction. ``reflect_hidden``
    reverses the hidden samples along the arc.
    """
    if not 0 < observed_arc_fraction < 1:
        raise InvalidRegionError("observed_arc_fraction must lie in (0, 1)")
    if n_nodes < MIN_NODES:
        raise ResolutionError(f"n_nodes = {n_nodes} < {MIN_NODES}")
    observed_profile = observed_profile or flat_profile
    hidden_profile = hidden_profile or observed_profile
    n_obs = int(round(observed_arc_fraction * n_nodes))
    n_hid = n_nodes - n_obs
    if n_obs < 3 or n_hid < 1:
        raise InvalidRegionError("observed arc needs at least 3 nodes and the hidden arc at least 1")

    x = np.arange(n_nodes) * (circumference / n_nodes)
    a_obs = np.broadcast_to(np.asarray(observed_profile(x), dtype=float), x.shape)
    a_hid = np.broadcast_to(np.asarray(hidden_profile(x), dtype=float), x.shape)
    if np.any(a_obs <= 0) or np.any(a_hid <= 0):
        raise InvalidModelError("profiles must be strictly positive")

    beta = np.ones(n_hid)
    k = min(BLEND_NODES, n_hid // 2)
    if k:
        ramp = _blend_ramp(k)
        beta[:k] = ramp
        beta[n_hid - k:] = ramp[::-1]
    hid = slice(n_obs, n_nodes)
    metric = a_obs.copy()
    metric[hid] = (1 - beta) * a_obs[hid] + beta * a_hid[hid]
    if reflect_hidden:
        metric[hid] = metric[hid][::-1]

    model = _model_from_metric(metric, circumference, rel_gap_tol, 1 / 3,
                               metadata={"n_observed_arc": n_obs, "reflect_hidden": reflect_hidden})
    if gevrey_index is None:
        gevrey_index = getattr(observed_profile, "gevrey_index", 1.0)
    region = make_observation_region(model, np.arange(1, n_obs - 1), gevrey_index=gevrey_index)
    return model, region


def make_observation_region(model: SpectralModel, interior_idx, gevrey_index: float = 1.0) -> ObservationRegion:
    """Observation region whose boundary is the ring of nodes around interior_idx."""
    n = model.n_nodes
    interior = np.unique(np.asarray(interior_idx, dtype=int))
    if interior.size == 0:
        raise InvalidRegionError("interior is empty")
    if interior.min() < 0 or interior.max() >= n:
        raise InvalidRegionError("interior index out of range")
    is_int = np.zeros(n, dtype=bool)
    is_int[interior] = True
    nbr_int = np.roll(is_int, 1) | np.roll(is_int, -1)
    boundary = np.flatnonzero(~is_int & nbr_int)
    hidden = np.flatnonzero(~is_int & ~nbr_int)
    if hidden.size == 0 or boundary.size == 0:
        raise InvalidRegionError("observation region leaves no hidden nodes")
    is_hidden = np.zeros(n, dtype=bool)
    is_hidden[hidden] = True

    orientation = []
    for b in boundary:
        left, right = is_hidden[(b - 1) % n], is_hidden[(b + 1) % n]
        if left == right:
            raise InvalidRegionError(f"boundary node {b} must have exactly one hidden neighbour")
        orientation.append(1 if right else -1)

    observed = np.union1d(interior, boundary)
    return ObservationRegion(
        n_nodes=n,
        spacing=model.spacing,
        interior_idx=_frozen(interior, int),
        boundary_idx=_frozen(boundary, int),
        hidden_idx=_frozen(hidden, int),
        local_metric=_frozen(model.metric[observed]),
        normal_orientation=_frozen(orientation, int),
        gevrey_index=float(gevrey_index),
    )


def arc_region(model: SpectralModel, observed_fraction: float, start: int = 0, gevrey_index: float = 1.0):
    """Contiguous observed arc of round(fraction * n) nodes starting at ``start``."""
    if not 0 < observed_fraction < 1:
        raise InvalidRegionError("observed_fraction must lie in (0, 1)")
    n_obs = int(round(observed_fraction * model.n_nodes))
    if n_obs < 3 or n_obs > model.n_nodes - 1:
        raise InvalidRegionError("observed arc needs at least 3 nodes and must leave a hidden node")
    interior = (start + np.arange(1, n_obs - 1)) % model.n_nodes
    return make_observation_region(model, interior, gevrey_index)


# --------------------------------------------------------------------------- config I/O


def load_model_config(source) -> dict:
    if isinstance(source, dict):
        return source
    with open(source) as fh:
        return json.load(fh)


def model_from_config(cfg: dict):
    """Build (model, region) from {n_nodes, circumference, profile, observed_fraction, hidden_profile?}."""
    n = int(cfg["n_nodes"])
    L = float(cfg.get("circumference", 2 * np.pi))
    frac = float(cfg.get("observed_fraction", 0.5))
    observed = profile_from_spec(cfg.get("profile"), L)
    if cfg.get("hidden_profile") is not None:
        hidden = profile_from_spec(cfg["hidden_profile"], L)
        return build_two_arc_model(n, frac, observed, hidden, circumference=L,
                                   reflect_hidden=bool(cfg.get("reflect_hidden", False)))
    model = build_circle_model(n, L, observed)
    region = arc_region(model, frac, gevrey_index=getattr(observed, "gevrey_index", 1.0))
    return model, region


def export_model(model: SpectralModel, path) -> Path:
    path = Path(path)
    model.export_csv(path)
    return path
