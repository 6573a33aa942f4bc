"""Command-line orchestration: build-model, run, report.

Exit codes: 0 all checks pass, 1 I/O, 2 config, 3 pipeline error, 4 acceptance failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .carlson import fit_growth
from .errors import ConfigError, FraclabError
from .forward import SourceToSolutionMap, dtn_direct, dtn_matrix
from .model import model_from_config
from .probes import (MollifierSpec, MomentSchedule, ZetaSeries, measured_moment_table, mollifier_source,
                     oracle_moment_table)
from .recovery import (assemble_dtn_from_spectral_data, oracle_spectrum, recover_from_table,
                       recover_multiplicities, recover_volume_weyl)

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_PIPELINE, EXIT_ACCEPTANCE = 0, 1, 2, 3, 4

log = logging.getLogger("fraclab")

DEFAULT_TOLERANCES = {
    "zeta_rel": 1e-8,
    "eigenvalue_rel": 1e-6,
    "trace_rel": 1e-5,
    "nd_residual": 1e-10,
    "dtn_lambda_1": 1e-5,
    "dtn_other": 1e-4,
    "volume_rel": 0.02,
}


def default_config_path() -> Path:
    return Path(str(resources.files("fraclab") / "configs" / "default.json"))


# --------------------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    model: dict
    alpha: float
    max_m: int
    K_target: int
    sources: list
    dtn_lambdas: list = field(default_factory=lambda: [1.0, 10.0, 100.0])
    output_dir: str = "out"
    seed: int = 0
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config: top level must be a JSON object")
        errors = []
        known = {"model", "alpha", "max_m", "K_target", "sources", "dtn_lambdas", "output_dir", "seed", "tolerances"}
        for key in sorted(set(raw) - known):
            errors.append(f"{key}: unknown field")
        for key in ("model", "alpha", "max_m", "K_target", "sources"):
            if key not in raw:
                errors.append(f"{key}: required field missing")
        if errors:
            raise ConfigError("; ".join(errors))

        def num(key, kind=float):
            v = raw[key]
            if isinstance(v, bool) or not isinstance(v, (int, float)) or (kind is int and int(v) != v):
                errors.append(f"{key}: expected {kind.__name__}, got {v!r}")
                return None
            return kind(v)

        alpha, max_m, K = num("alpha"), num("max_m", int), num("K_target", int)
        if alpha is not None and not 0 < alpha < 1:
            errors.append(f"alpha: {alpha} must lie in (0, 1)")
        if K is not None and K < 1:
            errors.append(f"K_target: {K} must be at least 1")
        if max_m is not None and K is not None and max_m < 2 * K + 2:
            errors.append(f"max_m: {max_m} fractional moments cannot resolve K_target = {K}; need >= {2 * K + 2}")
        model = raw["model"]
        if not isinstance(model, dict) or "n_nodes" not in model:
            errors.append("model: expected an object with at least n_nodes")
        srcs = raw["sources"]
        if not isinstance(srcs, list) or not srcs:
            errors.append("sources: expected a non-empty list")
            srcs = []
        for i, s in enumerate(srcs):
            if not isinstance(s, dict) or "center" not in s or "radius" not in s:
                errors.append(f"sources[{i}]: needs center and radius")
            elif set(s) - {"center", "radius", "gevrey_index", "sharpness"}:
                errors.append(f"sources[{i}]: unknown keys {sorted(set(s) - {'center', 'radius', 'gevrey_index', 'sharpness'})}")
        lams = raw.get("dtn_lambdas", [1.0, 10.0, 100.0])
        if not isinstance(lams, list) or not all(isinstance(v, (int, float)) and v > 0 for v in lams):
            errors.append("dtn_lambdas: expected a list of positive numbers")
        seed = raw.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
            errors.append(f"seed: expected an unsigned 64-bit integer, got {seed!r}")
        tol = dict(DEFAULT_TOLERANCES)
        user_tol = raw.get("tolerances", {})
        if not isinstance(user_tol, dict):
            errors.append("tolerances: expected an object")
            user_tol = {}
        for k, v in user_tol.items():
            if k not in DEFAULT_TOLERANCES:
                errors.append(f"tolerances.{k}: unknown tolerance")
            elif isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                errors.append(f"tolerances.{k}: expected a positive number")
            else:
                tol[k] = float(v)
        if errors:
            raise ConfigError("; ".join(errors))
        return cls(model=model, alpha=alpha, max_m=max_m, K_target=K,
                   sources=[MollifierSpec(int(s["center"]), float(s["radius"]), float(s.get("gevrey_index", 1.5)),
                                          float(s.get("sharpness", 1.0))) for s in srcs],
                   dtn_lambdas=[float(v) for v in lams], output_dir=str(raw.get("output_dir", "out")), seed=int(seed),
                   tolerances=tol)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sources"] = [asdict(s) for s in self.sources]
        return d


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: not valid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(raw)


# --------------------------------------------------------------------------- pipeline


def _check(value, tol, passed=None) -> dict:
    ok = bool(value <= tol) if passed is None else bool(passed)
    return {"value": float(value), "tolerance": float(tol), "pass": ok}


def _match_modes(recovered: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Index of the closest true eigenvalue for each recovered one."""
    return np.array([int(np.argmin(np.abs(truth - r) / truth)) for r in recovered], dtype=int)


def run_pipeline(cfg: ExperimentConfig) -> dict:
    """model -> forward sanity -> probes -> recovery -> carlson; returns the summary dict and arrays."""
    tol = cfg.tolerances
    model, region = model_from_config(cfg.model)
    log.info("model: %d nodes, %d observed, %d hidden", model.n_nodes, region.n_observed, len(region.hidden_idx))
    sources = [mollifier_source(region, s, label=f"f{i}") for i, s in enumerate(cfg.sources)]
    fmap = SourceToSolutionMap(model, region, cfg.alpha)

    # forward sanity: ND relation on the direct maps
    direct = {lam: dtn_direct(model, region, lam) for lam in cfg.dtn_lambdas}
    nd = max(d.nd_residual() for d in direct.values())

    # probes
    measured = measured_moment_table(region, fmap, cfg.alpha, sources, cfg.max_m)
    oracle = oracle_moment_table(model, region, cfg.alpha, sources, cfg.max_m)
    zscale = np.abs(oracle.values).max(axis=2)
    zeta_err = float((np.abs(measured.values - oracle.values).max(axis=2) / zscale).max())
    log.info("zeta agreement %.3g", zeta_err)

    # recovery from measured fractional moments
    spec = recover_from_table(measured, cfg.K_target)
    S = len(sources)
    if S >= 4:
        recover_multiplicities(spec)
    truth = oracle_spectrum(model, region, sources)
    idx = _match_modes(spec.eigenvalues, truth.eigenvalues)
    rel = np.abs(spec.eigenvalues - truth.eigenvalues[idx]) / truth.eigenvalues[idx]
    # expected: first K_target detectable true modes
    want = np.flatnonzero(truth.detectable)[: cfg.K_target]
    want_err = []
    for j in want:
        d = np.abs(spec.eigenvalues - truth.eigenvalues[j]) / truth.eigenvalues[j]
        want_err.append(float(d.min()))
    trace_err = []
    for r, j in enumerate(idx):
        ref = truth.traces[j]
        trace_err.append(float(np.abs(spec.traces[r] - ref).max() / max(np.abs(ref).max(), 1e-300)))
    modes = []
    for r in range(spec.K):
        j = idx[r]
        modes.append({
            "k": r + 1,
            "recovered_eigenvalue": float(spec.eigenvalues[r]),
            "nearest_true_eigenvalue": float(truth.eigenvalues[j]),
            "relative_error": float(rel[r]),
            "trace_error": trace_err[r],
            "multiplicity": int(spec.multiplicities[r]) if spec.multiplicities is not None else None,
            "true_multiplicity": int(truth.multiplicities[j]),
            "detectable": bool(spec.detectable[r]),
        })
    det = np.asarray(spec.detectable, dtype=bool)
    eig_max = max(want_err) if want_err else math.inf
    trace_max = max((trace_err[r] for r in range(spec.K) if det[r]), default=math.inf)
    mult_ok = spec.multiplicities is not None and all(
        m["multiplicity"] == m["true_multiplicity"] for m in modes if m["detectable"])

    # volume from the recovered spectrum (Weyl fit needs at least 10 modes)
    volume = None
    if spec.K >= 10 and spec.multiplicities is not None:
        volume = recover_volume_weyl(spec.eigenvalues, spec.multiplicities, model.dimension_n)

    # DtN from recovered spectral data
    dtn_rows, dtn_arrays = [], {}
    for lam, d in direct.items():
        limit = tol["dtn_lambda_1"] if lam == 1.0 else tol["dtn_other"]
        if volume is None:
            dtn_rows.append({"lambda": lam, "error": None, "tolerance": limit, "pass": False,
                             "note": "volume not recoverable from the recovered modes"})
            continue
        try:
            rec = assemble_dtn_from_spectral_data(spec, region, sources, lam, volume)
        except FraclabError as exc:
            dtn_rows.append({"lambda": lam, "error": None, "tolerance": limit, "pass": False, "note": str(exc)})
            continue
        err = float(np.abs(rec.dtn - d.dtn).max())
        dtn_arrays[lam] = rec.dtn
        dtn_rows.append({"lambda": lam, "error": err, "tolerance": limit, "pass": err <= limit, "note": ""})

    # carlson diagnostics on the zeta function of the first source at its center
    zs = ZetaSeries(model, sources[0], cfg.sources[0].center)
    fit = fit_growth(lambda z: complex(zs(z)[0]), schedule=MomentSchedule(cfg.alpha, cfg.max_m))

    checks = {
        "zeta_agreement": _check(zeta_err, tol["zeta_rel"]),
        "nd_relation": _check(nd, tol["nd_residual"]),
        "eigenvalues": _check(eig_max, tol["eigenvalue_rel"]),
        "traces": _check(trace_max, tol["trace_rel"]),
        "multiplicities": _check(0.0 if mult_ok else 1.0, 0.0, passed=mult_ok),
    }
    if volume is not None:
        vol_err = abs(volume - model.total_volume) / model.total_volume
        checks["volume"] = _check(vol_err, tol["volume_rel"])
    checks["dtn"] = {"value": max((r["error"] for r in dtn_rows if r["error"] is not None), default=None),
                     "tolerance": tol["dtn_other"], "pass": all(r["pass"] for r in dtn_rows)}
    summary = {
        "status": "pass" if all(c["pass"] for c in checks.values()) else "fail",
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "model": {"n_nodes": model.n_nodes, "circumference": float(model.circumference),
                  "observed_length": float(region.observed_volume), "n_observed": int(region.n_observed)},
        "checks": checks,
        "eigenvalue_errors": want_err,
        "hankel_condition": spec.diagnostics.get("hankel_condition"),
        "modes": modes,
        "volume": {"estimate": volume, "truth": float(model.total_volume)},
        "dtn": dtn_rows,
        "carlson": fit.to_dict(),
    }
    arrays = {"measured": measured, "spectrum": spec, "direct": direct, "recovered_dtn": dtn_arrays,
              "region": region}
    return {"summary": summary, "arrays": arrays}


def _write_dtn_csv(path: Path, direct: dict, recovered: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "row", "col", "direct", "recovered"])
        for lam, d in direct.items():
            rec = recovered.get(lam)
            n = d.dtn.shape[0]
            for i in range(n):
                for j in range(n):
                    r = repr(float(rec[i, j])) if rec is not None else ""
                    w.writerow([repr(float(lam)), i, j, repr(float(d.dtn[i, j])), r])


def run_experiment(config_path, out_dir=None, seed=None) -> int:
    """Run the full pipeline and write moments.csv, spectrum.csv, dtn.csv, summary.json."""
    try:
        cfg = load_config(config_path)
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if seed is not None:
        cfg.seed = int(seed)
    out = Path(out_dir or cfg.output_dir)
    try:
        result = run_pipeline(cfg)
    except FraclabError as exc:
        print(f"error [{exc.origin}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    try:
        out.mkdir(parents=True, exist_ok=True)
        a = result["arrays"]
        a["measured"].to_csv(out / "moments.csv")
        a["spectrum"].to_csv(out / "spectrum.csv", source_ids=a["measured"].source_ids,
                             nodes=a["region"].observed_idx)
        _write_dtn_csv(out / "dtn.csv", a["direct"], a["recovered_dtn"])
        with open(out / "summary.json", "w") as fh:
            json.dump(result["summary"], fh, indent=2, sort_keys=True)
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return EXIT_IO
    status = result["summary"]["status"]
    print(f"run: {status}; outputs in {out}")
    return EXIT_OK if status == "pass" else EXIT_ACCEPTANCE


def build_model(config_path, out_dir) -> int:
    """Write model.csv (node, coordinate, weight, metric) and eigenvalues.csv."""
    try:
        with open(config_path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"error [config]: not valid JSON ({exc})", file=sys.stderr)
        return EXIT_CONFIG
    mcfg = raw.get("model", raw) if isinstance(raw, dict) else None
    if not isinstance(mcfg, dict) or "n_nodes" not in mcfg:
        print("error [config]: model: expected an object with at least n_nodes", file=sys.stderr)
        return EXIT_CONFIG
    try:
        model, region = model_from_config(mcfg)
    except FraclabError as exc:
        print(f"error [{exc.origin}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        model.export_csv(out / "model.csv")
        with open(out / "eigenvalues.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "eigenvalue", "multiplicity", "trusted"])
            for k, (lam, d) in enumerate(zip(model.distinct_eigenvalues, model.multiplicities)):
                w.writerow([k, repr(float(lam)), int(d), int(k <= model.trusted_distinct)])
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"build-model: {model.n_nodes} nodes, {region.n_observed} observed; outputs in {out}")
    return EXIT_OK


# --------------------------------------------------------------------------- report


def _num(v, where):
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"{where}: expected a number, got {v!r}")
    return float(v)


def _fmt(v) -> str:
    return "-" if v is None else f"{v:.3e}"


def report(summary_path, stream=None) -> int:
    stream = stream or sys.stdout
    try:
        with open(summary_path) as fh:
            s = json.load(fh)
        rows = []
        for i, m in enumerate(s["modes"]):
            rows.append((int(_num(m["k"], f"modes[{i}].k")), _num(m["recovered_eigenvalue"], f"modes[{i}].recovered_eigenvalue"),
                         _num(m["nearest_true_eigenvalue"], f"modes[{i}].nearest_true_eigenvalue"),
                         _num(m["relative_error"], f"modes[{i}].relative_error"),
                         _num(m["trace_error"], f"modes[{i}].trace_error"),
                         m.get("multiplicity"), m.get("true_multiplicity"), bool(m.get("detectable", True))))
        tol = s["config"]["tolerances"]
        eig_tol = _num(tol["eigenvalue_rel"], "tolerances.eigenvalue_rel")
        tr_tol = _num(tol["trace_rel"], "tolerances.trace_rel")
        checks = {k: (_num(v["value"], f"checks.{k}.value"), _num(v["tolerance"], f"checks.{k}.tolerance"),
                      bool(v["pass"])) for k, v in s["checks"].items()}
        dtn = [(_num(r["lambda"], "dtn.lambda"), _num(r["error"], "dtn.error"), _num(r["tolerance"], "dtn.tolerance"),
                bool(r["pass"])) for r in s["dtn"]]
        vol = s["volume"]
        vol_est, vol_true = _num(vol["estimate"], "volume.estimate"), _num(vol["truth"], "volume.truth")
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, TypeError) as exc:
        print(f"error [io]: cannot parse summary ({exc})", file=sys.stderr)
        return EXIT_IO

    p = lambda *a: print(*a, file=stream)  # noqa: E731
    p(f"{'k':>3} {'recovered':>12} {'truth':>12} {'rel.err':>10} {'trace.err':>10} {'d_hat':>5} {'d':>3}  status")
    for k, lam, tru, e, te, d, dt, det in rows:
        if not det:
            status = "undetectable"
        else:
            status = "PASS" if e <= eig_tol and te <= tr_tol and d == dt else "FAIL"
        p(f"{k:>3} {lam:>12.6g} {tru:>12.6g} {e:>10.2e} {te:>10.2e} {str(d):>5} {str(dt):>3}  {status}")
    p("")
    p(f"volume: estimate {_fmt(vol_est)}  truth {_fmt(vol_true)}")
    for lam, err, t, ok in dtn:
        p(f"dtn lambda={lam:g}: error {_fmt(err)} (tol {t:.0e})  {'PASS' if ok else 'FAIL'}")
    p("")
    for name, (v, t, ok) in checks.items():
        p(f"{name:<16} {_fmt(v):>10}  tol {_fmt(t):>10}  {'PASS' if ok else 'FAIL'}")
    p(f"overall: {s.get('status', 'unknown')}")
    return EXIT_OK


# --------------------------------------------------------------------------- entry point


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fraclab", description=__doc__.splitlines()[0])
    parser.add_argument("--verbose", action="store_true", help="log pipeline progress to stderr")
    sub = parser.add_subparsers(dest="verb", required=True)
    b = sub.add_parser("build-model", help="build the discrete model and export nodes and eigenvalues")
    b.add_argument("--config", default=None, help="experiment or model config (default: bundled)")
    b.add_argument("--out", default="out")
    r = sub.add_parser("run", help="run the full pipeline")
    r.add_argument("--config", default=None, help="experiment config (default: bundled)")
    r.add_argument("--out", default=None)
    r.add_argument("--seed", type=int, default=None)
    rep = sub.add_parser("report", help="print tables from a summary.json")
    rep.add_argument("summary")
    for p in (b, r, rep):
        p.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.verb == "build-model":
        return build_model(args.config or default_config_path(), args.out)
    if args.verb == "run":
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            print("error [config]: seed: expected an unsigned 64-bit integer", file=sys.stderr)
            return EXIT_CONFIG
        return run_experiment(args.config or default_config_path(), args.out, args.seed)
    return report(args.summary)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
