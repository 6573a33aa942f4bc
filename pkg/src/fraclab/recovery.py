"""Inverse pipeline: fractional moments -> eigenvalues, projection traces,
multiplicities, volume, resolvents and the hidden-region DtN map.

The fractional moments s_m(x) = zeta_f(m - alpha, x) form an exponential sum
s_m = sum_k lambda_k^m c_k with c_k = lambda_k^{-alpha} (pi_k f)|_O, so a
block-Hankel matrix pencil over all (source, node) columns recovers lambda_k
and c_k.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import (DensityFailureError, IllConditionedError, IncompleteTableError, InsufficientDataError,
                     InvalidParameterError, PoleProximityError, SpuriousModeError, UnderdeterminedError)
from .forward import DtnData, normal_derivative_from_observed
from .model import ObservationRegion, SpectralModel
from .probes import MomentTable, zeta_oracle

MAX_CONDITION = 1e14
IMAG_TOL = 1e-6
RANK_GAP = 1e6
DETECT_TOL = 1e-10
MULTIPLICITY_TOL = 1e-6


@dataclass
class RecoveredSpectrum:
    eigenvalues: np.ndarray  # ascending, k = 1..K
    traces: np.ndarray  # (K, S, |O|): (pi_k f_s)|_O
    multiplicities: np.ndarray | None = None
    detectable: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.detectable is None:
            self.detectable = np.abs(self.traces).reshape(len(self.eigenvalues), -1).max(axis=1) > DETECT_TOL

    @property
    def K(self) -> int:
        return len(self.eigenvalues)

    def to_csv(self, path, source_ids=None, nodes=None) -> None:
        K, S, n = self.traces.shape
        sids = source_ids or [f"f{s}" for s in range(S)]
        nodes = np.arange(n) if nodes is None else nodes
        mult = self.multiplicities if self.multiplicities is not None else np.zeros(K, dtype=int)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "eigenvalue", "multiplicity", "detectable", "source_id", "node", "trace"])
            for k in range(K):
                for s in range(S):
                    for j in range(n):
                        w.writerow([k + 1, repr(float(self.eigenvalues[k])), int(mult[k]), int(self.detectable[k]),
                                    sids[s], int(nodes[j]), repr(float(self.traces[k, s, j]))])


@dataclass
class ResolventSamples:
    z: np.ndarray
    values: np.ndarray  # (len(z), |O|)
    poles: np.ndarray  # eigenvalues with a nonzero trace for this source


# --------------------------------------------------------------------------- pencil


def build_moment_matrix(table: MomentTable, K: int | None = None) -> np.ndarray:
    """Rows m = 1..M of fractional moments, columns (source, node) stacked."""
    frac = table.values[:, 0::2, :]  # b_{2m-1} = m - alpha
    M = frac.shape[1]
    if np.isnan(frac).any():
        raise IncompleteTableError("moment table is missing fractional entries")
    if K is not None and M < 2 * K + 2:
        raise IncompleteTableError(f"need M >= 2K + 2 = {2 * K + 2} fractional moments, have {M}")
    s = np.transpose(frac, (1, 0, 2)).reshape(M, -1)
    return np.real_if_close(s, tol=1e6).real if np.iscomplexobj(s) else s


def _select_rank(sigma: np.ndarray, cap: int) -> int:
    ratios = sigma[:-1] / np.maximum(sigma[1:], np.finfo(float).tiny)
    ratios = ratios[:cap]
    if ratios.size and ratios.max() > RANK_GAP:
        return int(np.argmax(ratios)) + 1
    return cap


def pencil_recover(moments: np.ndarray, K: int | None, alpha: float, scale: bool = True,
                   max_condition: float = MAX_CONDITION, auto_rank: bool = False) -> RecoveredSpectrum:
    """Matrix-pencil recovery of s_m = sum_k lambda_k^m c_k, m = 1..M.

    With ``scale`` the rows are divided by rho^m, rho = (max|s_M| / max|s_1|)^{1/(M-1)},
    and eigenvalues are multiplied back by rho. ``K`` caps the mode count; with
    ``auto_rank`` it is lowered to the largest singular-value cliff above 1e6.
    """
    s = np.asarray(moments, dtype=float)
    M = s.shape[0]
    if K is None:
        K = (M - 1) // 2
        auto_rank = True
    if not 1 <= K <= (M - 1) // 2:
        raise IncompleteTableError(f"K = {K} needs M >= 2K + 1 moments (M = {M})")
    rho = 1.0
    if scale:
        # max-abs in log space: squared norms of high moments overflow
        n1, nM = np.abs(s[0]).max(), np.abs(s[-1]).max()
        if n1 > 0 and nM > 0:
            rho = float(np.exp((np.log(nM) - np.log(n1)) / (M - 1)))
    m = np.arange(1, M + 1)
    st = s / rho ** m[:, None]
    H0, H1 = st[:-1], st[1:]
    U, sig, Vh = np.linalg.svd(H0, full_matrices=False)
    if sig[0] == 0:
        raise DensityFailureError("all moments vanish")
    if auto_rank:
        K = _select_rank(sig, min(K, len(sig)))
    if len(sig) < K:
        sig = np.concatenate([sig, np.zeros(K - len(sig))])
    cond = float(sig[0] / sig[K - 1]) if sig[K - 1] > 0 else math.inf
    if cond > max_condition:
        raise IllConditionedError(f"Hankel condition {cond:.3g} above {max_condition:.0e}; reduce K or M")
    Uk, Sk, Vk = U[:, :K], sig[:K], Vh[:K].T
    T = Uk.T @ H1 @ Vk / Sk[None, :]
    z = linalg.eigvals(T)
    bad = np.abs(z.imag) > IMAG_TOL * np.abs(z)
    if np.any(bad) or np.any(z.real <= 0):
        raise SpuriousModeError(f"pencil produced non-physical eigenvalues {np.sort_complex(z * rho)}")
    z = np.sort(z.real)
    lam = rho * z
    V = z[None, :] ** m[:, None]
    c, *_ = np.linalg.lstsq(V, st, rcond=None)
    resid = float(np.linalg.norm(V @ c - st) / np.linalg.norm(st))
    traces = lam[:, None] ** alpha * c
    diag = {"hankel_condition": cond, "amplitude_residual": resid, "rho": float(rho),
            "singular_values": sig[: min(len(sig), 2 * K + 2)].tolist(), "M": M, "K": K}
    return RecoveredSpectrum(eigenvalues=lam, traces=traces, diagnostics=diag)


def recover_from_table(table: MomentTable, K: int | None, auto_rank: bool = False, **kw) -> RecoveredSpectrum:
    """build_moment_matrix + pencil_recover, with traces reshaped to (K, S, |O|)."""
    s = build_moment_matrix(table, K if not auto_rank else None)
    spec = pencil_recover(s, K, table.schedule.alpha, auto_rank=auto_rank, **kw)
    S, n = table.n_sources, len(table.nodes)
    spec.traces = spec.traces.reshape(spec.K, S, n)
    spec.detectable = np.abs(spec.traces).reshape(spec.K, -1).max(axis=1) > DETECT_TOL
    return spec


# --------------------------------------------------------------------------- multiplicities


def recover_multiplicities(spectrum: RecoveredSpectrum, max_expected: int = 2,
                           rel_tol: float = MULTIPLICITY_TOL) -> np.ndarray:
    """d_k = numerical rank of the S x |O| matrix of traces of mode k."""
    K, S, _ = spectrum.traces.shape
    if S < max_expected + 2:
        raise UnderdeterminedError(f"source family of size {S} < {max_expected + 2}")
    d = np.zeros(K, dtype=int)
    for k in range(K):
        sv = np.linalg.svd(spectrum.traces[k], compute_uv=False)
        if sv[0] > DETECT_TOL:
            d[k] = int(np.sum(sv > rel_tol * sv[0]))
    spectrum.multiplicities = d
    return d


# --------------------------------------------------------------------------- oracle spectral data


def oracle_spectrum(model: SpectralModel, region: ObservationRegion, sources, n_modes: int | None = None
                    ) -> RecoveredSpectrum:
    """Exact eigenvalues and restricted projections, in RecoveredSpectrum form.

    Ground truth for comparisons and for exercising downstream stages; not a
    recovery.
    """
    K = model.n_distinct - 1 if n_modes is None else n_modes
    F = np.column_stack([np.asarray(getattr(f, "values", f), dtype=float) for f in sources])
    traces = np.empty((K, F.shape[1], region.n_observed))
    for k in range(1, K + 1):
        b = model.eigenblocks[k]
        traces[k - 1] = (b[region.observed_idx] @ (b.T @ (model.weights[:, None] * F))).T
    return RecoveredSpectrum(eigenvalues=model.distinct_eigenvalues[1:K + 1].copy(), traces=traces,
                             multiplicities=model.multiplicities[1:K + 1].copy())


# --------------------------------------------------------------------------- resolvent


def resolvent_from_spectrum(spectrum, z_grid, source_index: int = 0, *, region: ObservationRegion | None = None,
                            f=None, exclusion: float = 1e-3) -> ResolventSamples:
    """R_f(z, x) = sum_k (lambda_k - z)^{-1} (pi_k f)(x) on O.

    ``spectrum`` is a RecoveredSpectrum (uses its traces for ``source_index``) or
    a SpectralModel together with ``region`` and ``f`` (oracle, all modes).
    """
    if isinstance(spectrum, SpectralModel):
        if region is None or f is None:
            raise InvalidParameterError("an oracle model needs region and f")
        spectrum = oracle_spectrum(spectrum, region, [f])
        source_index = 0
    lam = spectrum.eigenvalues
    tr = spectrum.traces[:, source_index, :]
    z = np.atleast_1d(np.asarray(z_grid))
    radius = exclusion * lam[0]
    dist = np.abs(z[:, None] - lam[None, :])
    if np.any(dist < radius):
        raise PoleProximityError(f"grid point within {radius:.3g} of an eigenvalue")
    vals = (1.0 / (lam[None, :] - z[:, None])) @ tr
    poles = lam[np.abs(tr).max(axis=1) > DETECT_TOL]
    return ResolventSamples(z=z, values=vals, poles=poles)


def resolvent_power_series(model: SpectralModel, f, z, x, n_terms: int = 80) -> np.ndarray:
    """sum_{m=1}^{n_terms} z^{m-1} zeta_f(-m, x) with oracle negative moments (|z| < lambda_1)."""
    z = np.atleast_1d(np.asarray(z))
    x = np.atleast_1d(np.asarray(x, dtype=int))
    neg = np.array([zeta_oracle(model, f, -m, x) for m in range(1, n_terms + 1)])  # (n_terms, |x|)
    powers = z[:, None] ** np.arange(n_terms)[None, :]
    return powers @ neg


def residue_limit(spectrum: RecoveredSpectrum, k: int, source_index: int = 0, steps=(1e-4, 1e-7, 1e-10)) -> np.ndarray:
    """(lambda_k - z) R_f(z, .) along z = lambda_k - eps * gap; returns the last value.

    gap is the distance to the nearest other pole (or lambda_k if there is none), so
    the neighbouring poles contribute O(eps) even for nearly split pairs.
    """
    lam = spectrum.eigenvalues[k]
    others = np.delete(spectrum.eigenvalues, k)
    gap = float(np.abs(others - lam).min()) if others.size else abs(lam)
    gap = min(gap, abs(lam))
    out = None
    for eps in steps:
        z = lam - eps * gap
        r = resolvent_from_spectrum(spectrum, [z], source_index, exclusion=0.0).values[0]
        out = (lam - z) * r
    return out


# --------------------------------------------------------------------------- volume


def counting_at_eigenvalues(eigenvalues: np.ndarray, multiplicities: np.ndarray) -> np.ndarray:
    """N at each lambda_k: eigenvalues below it (lambda_0 = 0 included) plus half its own multiplicity."""
    below = 1 + np.concatenate([[0], np.cumsum(multiplicities)[:-1]])
    return below + multiplicities / 2.0


def recover_volume_weyl(eigenvalues, multiplicities, dimension_n: int = 1) -> float:
    """Fit N(lambda) = c lambda^{n/2} over the upper half of the modes; return Vol.

    Weyl: N(lambda) ~ omega_n Vol lambda^{n/2} / (2 pi)^n, so Vol = c (2 pi)^n / omega_n
    (L = pi c on a circle).
    """
    lam = np.asarray(eigenvalues, dtype=float)
    d = np.asarray(multiplicities, dtype=float)
    if lam.size < 10:
        raise InsufficientDataError(f"{lam.size} modes; Weyl fit needs at least 10")
    N = counting_at_eigenvalues(lam, d)
    half = lam.size // 2
    x = lam[half:] ** (dimension_n / 2)
    c = float(np.dot(N[half:], x) / np.dot(x, x))
    omega = math.pi ** (dimension_n / 2) / math.gamma(dimension_n / 2 + 1)
    return c * (2 * math.pi) ** dimension_n / omega


# --------------------------------------------------------------------------- DtN


def assemble_dtn_from_spectral_data(spectrum: RecoveredSpectrum, region: ObservationRegion, sources, lam: float,
                                    volume: float) -> DtnData:
    """Lambda^lam from spectral data on O only.

    R~_f(lam, .) = sum_{k>=0} (lambda_k + lam)^{-1} pi_k f on O, with the k = 0
    term (integral f) / (Vol lam). Its values on Sigma give D f and the boundary
    row balance gives N f; Lambda solves Lambda D = N in least squares.
    """
    if not lam > 0:
        raise InvalidParameterError("lambda must be positive")
    F = np.array([region.as_observed(f) for f in sources], dtype=float)  # (S, |O|)
    tr = spectrum.traces  # (K, S, |O|)
    R = np.einsum("k,ksx->sx", 1.0 / (spectrum.eigenvalues + lam), tr)
    R += (F @ region.local_weights)[:, None] / (volume * lam)
    D = R[:, region.boundary_pos].T  # (|Sigma|, S)
    N = normal_derivative_from_observed(region, lam, R, F).T
    sv = np.linalg.svd(D, compute_uv=False)
    if sv.size == 0 or sv[0] == 0 or sv[-1] < 1e-12 * sv[0] or D.shape[1] < D.shape[0]:
        raise DensityFailureError("source family does not span the boundary traces")
    X, *_ = np.linalg.lstsq(D.T, N.T, rcond=None)
    return DtnData(lam=float(lam), dirichlet_map=D, neumann_map=N, dtn=X.T)
