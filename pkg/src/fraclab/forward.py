"""Fractional Laplacian, the source-to-solution map, local iterated Laplacians
and the boundary maps of the hidden region.

Vectors on the full node set have length n_nodes; "observed vectors" have one
entry per node of O = interior + boundary, ordered by region.observed_idx.

Discrete normal derivative. For boundary node b with hidden neighbour o,

    d_nu u(b) = c_bo (u_o - u_b) / h - lam * (w_b / 2) u_b,

i.e. the one-sided flux into the hidden side with half of b's cell mass
attributed to the hidden side. This is minus the Schur complement of
(K + lam W) onto the boundary through the hidden block, so Lambda is
symmetric, second-order accurate, and N = Lambda D holds exactly. For a
solution of (K + lam W) v = W f the same quantity follows from the row
balance at b using only observed data:

    d_nu v(b) = sum_{observed j ~ b} c_bj (v_b - v_j) / h + lam (w_b / 2) v_b - w_b f_b.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import CompatibilityError, InvalidParameterError, LocalityError, SupportError
from .model import ObservationRegion, SpectralModel

MEAN_TOL = 1e-12


@dataclass(frozen=True)
class SourceFunction:
    """Nodal source values on the full node set with a label for tables."""

    values: np.ndarray
    label: str = "f"

    def mean(self, model: SpectralModel) -> float:
        return model.mean(self.values)


@dataclass(frozen=True)
class DtnData:
    lam: float
    dirichlet_map: np.ndarray  # |Sigma| x n_sources
    neumann_map: np.ndarray  # |Sigma| x n_sources
    dtn: np.ndarray  # |Sigma| x |Sigma|

    def nd_residual(self) -> float:
        return float(np.abs(self.neumann_map - self.dtn @ self.dirichlet_map).max())


def _values(f) -> np.ndarray:
    return np.asarray(getattr(f, "values", f))


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha <= 1:
        raise InvalidParameterError(f"alpha = {alpha} outside (0, 1]")


def _check_lambda(lam: float) -> None:
    if not lam > 0:
        raise InvalidParameterError(f"lambda = {lam} must be positive")


def _spectral_apply(model: SpectralModel, u: np.ndarray, power: float) -> np.ndarray:
    """sum_{k>=1} lambda_k^power pi_k u, with the mean removed first."""
    u = np.asarray(u)
    u = u - model.mean(u) if u.ndim == 1 else u - (model.weights @ u) / model.total_volume
    coef = model.coefficients(u)
    lam = model.mode_eigenvalues
    scale = np.zeros_like(lam)
    scale[1:] = lam[1:] ** power
    if coef.ndim == 2:
        scale = scale[:, None]
    return model.mode_vectors @ (scale * coef)


def fractional_laplacian_apply(model: SpectralModel, alpha: float, u) -> np.ndarray:
    """(-Delta)^alpha u through the eigenbasis; constants are annihilated."""
    _check_alpha(alpha)
    u = _values(u)
    if not np.all(np.isfinite(u)):
        raise InvalidParameterError("u must be finite")
    return _spectral_apply(model, u, alpha)


def solve_fractional(model: SpectralModel, alpha: float, f) -> np.ndarray:
    """Mean-free solution u of (-Delta)^alpha u = f for a mean-free source f."""
    _check_alpha(alpha)
    f = _values(f)
    mean = model.mean(f)
    if abs(mean) > MEAN_TOL * max(1.0, float(np.abs(f).max(initial=0.0))):
        raise CompatibilityError(f"source has nonzero mean ({mean:.3g})")
    return _spectral_apply(model, f, -alpha)


def _check_interior_support(region: ObservationRegion, f: np.ndarray) -> None:
    outside = np.ones(region.n_nodes, dtype=bool)
    outside[region.interior_idx] = False
    if np.any(f[outside] != 0):
        raise SupportError("source is not supported in the interior of O")


def source_to_solution(model: SpectralModel, region: ObservationRegion, alpha: float, f) -> np.ndarray:
    """L f = (solution of (-Delta)^alpha u = f) restricted to O."""
    f = _values(f)
    if f.shape == (region.n_observed,):
        f = region.extend(f)
    _check_interior_support(region, f)
    return solve_fractional(model, alpha, f)[region.observed_idx]


class SourceToSolutionMap:
    """Black-box accessor for the source-to-solution map.

    Takes an observed vector (a source on O) and returns an observed vector.
    This is the only handle on the model that measurement-side code receives.
    """

    def __init__(self, model: SpectralModel, region: ObservationRegion, alpha: float):
        _check_alpha(alpha)
        self._model = model
        self.region = region
        self.alpha = alpha

    def __call__(self, f_observed) -> np.ndarray:
        return source_to_solution(self._model, self.region, self.alpha, f_observed)


def local_laplacian(region: ObservationRegion, v: np.ndarray) -> np.ndarray:
    """One application of -Delta to an observed vector, using local data only.

    Values on boundary nodes must vanish, since the stencil there reaches hidden
    nodes whose metric is unknown.
    """
    v = np.asarray(v)
    bpos = region.boundary_pos
    if np.any(v[bpos] != 0):
        raise LocalityError("stencil would reach hidden nodes: support touches the boundary")
    h = region.spacing
    out = np.zeros_like(v)
    pos = region.position
    a = region.local_metric
    w = region.local_weights
    obs = region.observed_idx
    for side in (-1, 1):
        nb = (obs + side) % region.n_nodes
        pn = pos[nb]
        ok = pn >= 0
        c = np.zeros(len(obs))
        c[ok] = ((a[ok] + a[pn[ok]]) / 2.0) ** -0.5
        vn = np.where(ok, v[np.where(ok, pn, 0)], 0.0)
        # hidden neighbours contribute c * (v_b - 0); v_b = 0 there, so skip them
        out = out + np.where(ok, c * (v - vn), 0.0)
    return out / (h * w)


def iterated_laplacian_local(region: ObservationRegion, f, m: int) -> np.ndarray:
    """(-Delta)^m f on O from the local metric, for f supported in the interior.

    Each intermediate (-Delta)^j f, j < m, must vanish on the boundary, which
    holds when supp f keeps at least m nodes away from Sigma.
    """
    if m < 0 or int(m) != m:
        raise InvalidParameterError("m must be a non-negative integer")
    v = region.as_observed(f).astype(float)
    if np.any(v[~region.interior_mask] != 0):
        raise SupportError("source is not supported in the interior of O")
    for j in range(int(m)):
        try:
            v = local_laplacian(region, v)
        except LocalityError as exc:
            raise LocalityError(f"order {m} needs a margin of {m} nodes; failed at step {j + 1}") from exc
    return v


def support_margin(region: ObservationRegion, f) -> int:
    """Stencil distance from supp f to the nearest non-interior node."""
    v = region.as_observed(f)
    supp = region.observed_idx[v != 0]
    if supp.size == 0:
        return region.n_nodes
    n = region.n_nodes
    outside = np.setdiff1d(np.arange(n), region.interior_idx)
    d = np.abs(supp[:, None] - outside[None, :])
    return int(np.minimum(d, n - d).min())


# --------------------------------------------------------------------------- boundary maps


def _boundary_links(model: SpectralModel, region: ObservationRegion):
    """Per boundary node: (hidden neighbour, observed neighbours)."""
    links = []
    for b, sgn in zip(region.boundary_idx, region.normal_orientation):
        out = (b + sgn) % model.n_nodes
        inner = [j for j in model.neighbors(b) if region.position[j] >= 0]
        links.append((int(out), inner))
    return links


def _hidden_normal_derivative(model, region, lam, u):
    """d_nu u on Sigma from values on Sigma and the hidden side."""
    h = model.spacing
    out = np.empty(len(region.boundary_idx))
    for i, (b, (o, _)) in enumerate(zip(region.boundary_idx, _boundary_links(model, region))):
        out[i] = model.edge_coefficient(b, o) * (u[o] - u[b]) / h - lam * model.weights[b] / 2 * u[b]
    return out


def normal_derivative_from_observed(region: ObservationRegion, lam: float, v_obs, f_obs) -> np.ndarray:
    """d_nu v on Sigma for v = (-Delta + lam)^{-1} f, from observed data only."""
    v_obs = np.asarray(v_obs)
    f_obs = np.asarray(f_obs)
    h = region.spacing
    w = region.local_weights
    out = np.empty(v_obs.shape[:-1] + (len(region.boundary_idx),), dtype=v_obs.dtype)
    for i, b in enumerate(region.boundary_idx):
        pb = region.position[b]
        acc = lam * w[pb] / 2 * v_obs[..., pb] - w[pb] * f_obs[..., pb]
        for j in region.neighbors(b):
            pj = region.position[j]
            if pj >= 0:
                acc = acc + region.local_edge_coefficient(b, j) * (v_obs[..., pb] - v_obs[..., pj]) / h
        out[..., i] = acc
    return out


def dtn_matrix(model: SpectralModel, region: ObservationRegion, lam: float) -> np.ndarray:
    """Lambda^lam: boundary traces -> normal derivatives of the hidden-side solution."""
    _check_lambda(lam)
    H, S = region.hidden_idx, region.boundary_idx
    M = model.stiffness + lam * np.diag(model.weights)
    ext = linalg.solve(M[np.ix_(H, H)], -M[np.ix_(H, S)], assume_a="pos")
    dtn = np.empty((len(S), len(S)))
    for j in range(len(S)):
        u = np.zeros(model.n_nodes)
        u[S[j]] = 1.0
        u[H] = ext[:, j]
        dtn[:, j] = _hidden_normal_derivative(model, region, lam, u)
    return dtn


def source_to_dirichlet_neumann(model: SpectralModel, region: ObservationRegion, lam: float, f):
    """(v|_Sigma, d_nu v|_Sigma) for the solution of (-Delta + lam) v = f on M."""
    _check_lambda(lam)
    f = _values(f)
    if f.shape == (region.n_observed,):
        f = region.extend(f)
    if np.any(f[region.hidden_idx] != 0):
        raise SupportError("source must be supported in O")
    M = model.stiffness + lam * np.diag(model.weights)
    v = linalg.solve(M, model.weights[:, None] * f.reshape(model.n_nodes, -1), assume_a="pos")
    if f.ndim == 1:
        v = v[:, 0]
        return v[region.boundary_idx], _hidden_normal_derivative(model, region, lam, v)
    traces = v[region.boundary_idx]
    normals = np.column_stack([_hidden_normal_derivative(model, region, lam, v[:, j]) for j in range(v.shape[1])])
    return traces, normals


def dtn_direct(model: SpectralModel, region: ObservationRegion, lam: float) -> DtnData:
    """Direct DtN plus source-to-Dirichlet/Neumann matrices for nodal unit sources on O."""
    _check_lambda(lam)
    dtn = dtn_matrix(model, region, lam)
    sources = np.zeros((model.n_nodes, region.n_observed))
    sources[region.observed_idx, np.arange(region.n_observed)] = 1.0
    D, N = source_to_dirichlet_neumann(model, region, lam, sources)
    return DtnData(lam=float(lam), dirichlet_map=D, neumann_map=N, dtn=dtn)
