"""Command line: ``partitia <subcommand> --config PATH [--seed S] [--out DIR] [--threads K]``.

Exit codes: 0 success, 1 failed self-test, 2 configuration error, 3 model error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis.stats import CondensateStats, default_cutoff
from .analysis.theory import (DensitySeries, condensate_fraction_theory, free_energy_limit, sigma_c,
                              solve_activity, typical_limits)
from .config import ExperimentConfig, load_config
from .dynamics import (CoagFragChain, CoagFragConfig, CRPChain, CRPChainConfig, IndependentKernel,
                       ReshuffleChain, ZeroRangeProcess, simulate)
from .errors import ConfigError, PartitiaError
from .experiments import (canonical_rows, condensation_summary, cramer_report, droplet_report,
                          fluctuation_test, resolve_size, spawn_generators, stationarity_check)
from .lattice import LatticeWeights
from .presets import PRESETS, preset

OUTPUT_ENV = "PARTITIA_OUTPUT_DIR"
SAMPLE_KINDS = ("sample", "condensation-sweep", "fluctuation-test")
DYNAMICS_KINDS = ("dynamics", "stationarity-check")
ANALYZE_KINDS = ("cramer", "droplet-shift")


# output helpers

def _plain(obj):
    """JSON-ready copy with numpy scalars/arrays converted and non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))  # shortest round-trip form
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, columns: list[str], rows: list[dict], provenance: str) -> None:
    buf = io.StringIO()
    buf.write(f"# {provenance}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c, "")) for c in columns])
    path.write_text(buf.getvalue(), encoding="utf-8")


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def version_string() -> str:
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


# experiment runners: each returns (csv columns, csv rows, summary, certificates)

def _threads(cfg: ExperimentConfig, override: int | None) -> int:
    if override:
        return override
    return cfg.experiment.threads or os.cpu_count() or 1


def _model(cfg: ExperimentConfig):
    return cfg.model.weights.build(), cfg.model.potential.build()


def _run_sample(cfg: ExperimentConfig, seed: int, threads: int):
    weights, pot = _model(cfg)
    ex = cfg.experiment
    series = DensitySeries(weights, pot)
    rows, points, certs = [], [], []
    sweep = ex.kind == "condensation-sweep"
    for L in cfg.model.L_values:
        lat = LatticeWeights(pot, L, cfg.truncation.eps)
        if lat.potential.kind != "square":
            certs.append({"L": L, "max_tail_certificate": float(np.max(lat.tail_certificates(16)))})
        for rho in cfg.model.rho_values:
            size = resolve_size(L, pot.d, rho, cfg.model.n)
            K = ex.K or default_cutoff(max(size.n, 1))
            reps = canonical_rows(weights, pot, L, size.n, ex.replicas, seed, K=K, j_max=ex.j_max,
                                  k_max=ex.k_max, threads=threads, eps=cfg.truncation.eps)
            stats = CondensateStats.from_rows(reps, K)
            point = {"L": L, "n": size.n, "rho": size.rho, "rounding": size.rounding, **stats.summary()}
            if size.n > 0:
                try:
                    point["theory"] = condensation_summary(stats, series, size.rho, lat, weights)
                except (PartitiaError, ArithmeticError) as exc:
                    point["theory"] = {"unavailable": str(exc)}
            points.append(point)
            if sweep:
                nu = stats.mean_se(stats.nu_hat)
                mu = stats.mean_se(stats.mu_hat)
                rows.append({"L": L, "n": size.n, "rho": size.rho, "nu_hat": nu[0], "nu_se": nu[1],
                             "mu_hat": mu[0], "mu_se": mu[1],
                             "nu_theory": condensate_fraction_theory(series, size.rho)})
            else:
                for i, r in enumerate(reps):
                    rows.append({"L": L, "n": size.n, "replica": i, "H0": r.H0, "M": r.M, "T": r.T, "S": r.S,
                                 "nu_hat": r.nu_hat, "mu_hat": r.mu_hat})
    cols = (["L", "n", "rho", "nu_hat", "nu_se", "mu_hat", "mu_se", "nu_theory"] if sweep
            else ["L", "n", "replica", "H0", "M", "T", "S", "nu_hat", "mu_hat"])
    return cols, rows, {"points": points}, certs


def _run_fluctuation(cfg: ExperimentConfig, seed: int, threads: int):
    weights, pot = _model(cfg)
    ex = cfg.experiment
    rows, results = [], []
    for L in cfg.model.L_values:
        for rho in cfg.model.rho_values:
            res = fluctuation_test(weights, pot, L, ex.replicas, seed, ex.regime, rho=rho, n=cfg.model.n,
                                   observable=ex.observable, reference_size=ex.reference_size,
                                   radius=cfg.truncation.radius, threads=threads)
            vals = res.pop("values")
            results.append(res)
            for i, v in enumerate(vals):
                rows.append({"L": L, "n": res["n"], "replica": i, "value": v})
    ks = [r["ks_statistic"] for r in results if "ks_statistic" in r]
    summary = {"results": results}
    if len(ks) > 1:
        summary["ks_decreasing"] = all(b < a for a, b in zip(ks, ks[1:]))
    return ["L", "n", "replica", "value"], rows, summary, []


def build_process(cfg: ExperimentConfig, lat: LatticeWeights, n: int):
    weights = cfg.model.weights.build()
    dyn = cfg.dynamics
    idx = None if lat.potential.kind == "square" else np.arange(min(dyn.window, lat.n_sites))
    kernel = IndependentKernel(lat, idx)
    if dyn.process == "crp":
        if weights.kind not in ("constant", "bose"):
            raise ConfigError("the restaurant chain needs constant weights")
        return CRPChain(CRPChainConfig(1.0 if weights.kind == "bose" else weights.value, lat, kernel))
    if dyn.process == "reshuffle":
        return ReshuffleChain(lat, weights, n, kernel)
    if dyn.process == "zrp":
        return ZeroRangeProcess.from_weights(lat, weights, n, kernel)
    s = dyn.coagulation_scale
    a = (lambda j: s) if dyn.coagulation == "constant" else (lambda j: s * j)
    return CoagFragChain(lat, CoagFragConfig.from_coagulation(weights, a, max(n, 1)), kernel)


def _run_dynamics(cfg: ExperimentConfig, seed: int, threads: int):
    ex, dyn = cfg.experiment, cfg.dynamics
    weights, pot = _model(cfg)
    L = cfg.model.L_values[0]
    size = resolve_size(L, pot.d, cfg.model.rho_values[0], cfg.model.n)
    lat = LatticeWeights(pot, L, cfg.truncation.eps)
    process = build_process(cfg, lat, size.n)
    if ex.kind == "stationarity-check":
        res = stationarity_check(process, size.n, seeds=ex.replicas, seed=seed)
        rows = [{"seed_index": i, "pvalue": p} for i, p in enumerate(res["per_seed_pvalues"])]
        return ["seed_index", "pvalue"], rows, res, []
    epochs = np.linspace(0.0, dyn.horizon, dyn.epochs + 1)
    obs = ("H0", "M") if isinstance(process, ZeroRangeProcess) else ("H0", "M", "T")
    rows, runs = [], []
    for i, rng in enumerate(spawn_generators(seed, ex.replicas)):
        state = process.initial_state(dyn.initial, size.n, rng)
        rec = simulate(process, state, rng, epochs=epochs, max_events=dyn.max_events, observables=obs)
        runs.append({"replica": i, "events": rec.n_events, "truncated": rec.truncated})
        for k, t in enumerate(rec.times):
            row = {"replica": i, "time": t}
            for name in obs:
                row[name] = rec.values[name][k]
            rows.append(row)
    final = {name: float(np.mean([r[name] for r in rows if r["time"] == rows[-1]["time"]])) for name in obs}
    return ["replica", "time", *obs], rows, {"n": size.n, "L": L, "runs": runs, "final_means": final}, []


def _run_analyze(cfg: ExperimentConfig, seed: int, threads: int):
    weights, pot = _model(cfg)
    ex = cfg.experiment
    if ex.kind == "cramer":
        rep = cramer_report(weights, ex.order)
        rows = [{"k": k, "reversion": a, "legendre": b}
                for k, (a, b) in enumerate(zip(rep["reversion"], rep["legendre"]))]
        return ["k", "reversion", "legendre"], rows, rep, []
    if ex.kind == "droplet-shift":
        rho = cfg.model.rho_values[0]
        if rho is None:
            raise ConfigError("droplet-shift needs model.rho")
        rep = droplet_report(weights, rho, cfg.model.L_values, pot.d)
        cols = ["L", "delta", "value", "asymptotic", "ratio"]
        return cols, [r for r in rep["rows"] if "delta" in r], rep, []
    return theory_summary(cfg)


def theory_summary(cfg: ExperimentConfig):
    weights, pot = _model(cfg)
    series = DensitySeries(weights, pot)
    out = {"z_c": series.z_c, "z_c_approximate": series.z_c_approximate, "rho_c": series.rho_c}
    sig = sigma_c(series)
    out["sigma_c2"] = sig.value
    rows = []
    for rho in cfg.model.rho_values:
        if rho is None:
            continue
        lim = typical_limits(series, rho)
        rec = {"rho": rho, "z0": solve_activity(series, rho),
               "nu_theory": condensate_fraction_theory(series, rho)}
        try:
            rec["free_energy_limit"] = free_energy_limit(series, rho)
        except PartitiaError as exc:
            rec["free_energy_limit"] = str(exc)
        rec["a"] = lim.size_fractions[1:].tolist()
        rec["m"] = lim.occupation_fractions[1:].tolist()
        rows.append(rec)
    out["points"] = rows
    csv_rows = [{k: r[k] for k in ("rho", "z0", "nu_theory")} for r in rows]
    return ["rho", "z0", "nu_theory"], csv_rows, out, []


RUNNERS = {
    "sample": _run_sample, "condensation-sweep": _run_sample, "fluctuation-test": _run_fluctuation,
    "dynamics": _run_dynamics, "stationarity-check": _run_dynamics,
    "cramer": _run_analyze, "droplet-shift": _run_analyze,
}


def execute(cfg: ExperimentConfig, out_dir: Path, seed: int | None = None, threads: int | None = None,
            theory_only: bool = False) -> dict:
    """Run a configuration and write CSV, summary and manifest files."""
    seed = cfg.experiment.seed if seed is None else seed
    nthreads = _threads(cfg, threads)
    kind = cfg.experiment.kind
    start = time.perf_counter()
    if theory_only:
        cols, rows, summary, certs = theory_summary(cfg)
        kind = "theory"
    else:
        cols, rows, summary, certs = RUNNERS[kind](cfg, seed, nthreads)
    wall = time.perf_counter() - start
    out_dir.mkdir(parents=True, exist_ok=True)
    prefix = f"{cfg.output.prefix}-{kind}"
    provenance = f"partitia {version_string()} config={cfg.digest()} seed={seed}"
    csv_path = out_dir / f"{prefix}.csv"
    summary_path = out_dir / f"{prefix}-summary.json"
    write_csv(csv_path, cols, rows, provenance)
    write_json(summary_path, {"config_digest": cfg.digest(), "seed": seed, "kind": kind, **summary})
    files = {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in (csv_path, summary_path)}
    manifest = {
        "version": version_string(), "config": cfg.to_dict(), "config_digest": cfg.digest(), "seed": seed,
        "threads": nthreads, "wall_time_seconds": wall, "files": files,
        "truncation": {"eps": cfg.truncation.eps, "radius": cfg.truncation.radius, "certificates": certs},
    }
    write_json(out_dir / f"{prefix}-manifest.json", manifest)
    return {"csv": csv_path, "summary": summary_path, "summary_data": summary, "manifest": manifest}


# self-test

def _label(w) -> str:
    return ",".join(f"{k}={v}" for k, v in w.describe().items())


def selftest() -> list[tuple[str, bool, str]]:
    """Enumeration-scale invariants on tiny square-trap systems."""
    from .dynamics import check_detailed_balance
    from .lattice import Potential
    from .partitions import h_from_theta, theta_from_h
    from .samplers import enumerate_spatial, prob_eta, prob_r, prob_spatial
    from .weights import WeightSequence

    results = []
    weights_list = [WeightSequence.constant(1.0), WeightSequence.constant(2.0), WeightSequence.algebraic(-2.0),
                    WeightSequence.stretched(0.5)]
    for w in weights_list:
        for S in (1, 2, 3):
            lat = LatticeWeights(Potential.square(1), S)
            sites = [lat.site(i) for i in range(lat.n_sites)]
            for n in range(0, 5):
                states = list(enumerate_spatial(sites, n))
                total = math.fsum(prob_spatial(lat, w, n, s) for s in states)
                ok = abs(total - 1) <= 1e-9
                eta_tot, r_tot = {}, {}
                for s in states:
                    p = prob_spatial(lat, w, n, s)
                    eta_tot[s.eta_key()] = eta_tot.get(s.eta_key(), 0.0) + p
                    rk = tuple(sorted(s.counts().items()))
                    r_tot[rk] = r_tot.get(rk, 0.0) + p
                for s in states:
                    ok &= abs(eta_tot[s.eta_key()] - prob_eta(lat, w, n, s.occupations())) <= 1e-10
                    ok &= abs(r_tot[tuple(sorted(s.counts().items()))] - prob_r(lat, w, n, s.counts())) <= 1e-10
                results.append((f"measure {_label(w)} sites={S} n={n}", bool(ok), f"sum={total!r}"))
        h = h_from_theta(w, 12)
        back = theta_from_h(h)
        err = float(np.max(np.abs(back[1:] - w.array(12)[1:]) / np.maximum(w.array(12)[1:], 1e-300)))
        results.append((f"theta-h round trip {_label(w)}", err <= 1e-10, f"err={err:.2e}"))
    lat = LatticeWeights(Potential.square(1), 2)
    for theta in (1.0, 2.0):
        rep = check_detailed_balance(CRPChain(CRPChainConfig(theta, lat)), 3)
        results.append((f"restaurant chain detailed balance theta={theta}", rep.max_violation <= 1e-10,
                        f"violation={rep.max_violation:.2e}"))
    return results


# entry point

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="partitia", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"partitia {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run any experiment kind"),
                           ("sample", "exact sampling experiments"),
                           ("dynamics", "Markov dynamics and stationarity checks"),
                           ("analyze", "theory numerics (Cramér, droplet shift, limits)")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        sp.add_argument("--threads", type=int)
    pp = sub.add_parser("preset", help="print a ready configuration")
    pp.add_argument("name", nargs="?")
    pp.add_argument("--format", choices=("toml", "json"), default="toml")
    pp.add_argument("--write")
    pp.add_argument("--list", action="store_true")
    sub.add_parser("selftest", help="enumeration-scale invariant suite")
    return p


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    return Path(args.out or cfg.output.dir or os.environ.get(OUTPUT_ENV) or "partitia-out")


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "selftest":
            res = selftest()
            for name, ok, info in res:
                print(f"{'PASS' if ok else 'FAIL'}  {name}  {info}")
            return 0 if all(ok for _, ok, _ in res) else 1
        if args.command == "preset":
            if args.list or not args.name:
                print("\n".join(sorted(PRESETS)))
                return 0
            cfg = preset(args.name)
            text = cfg.to_toml() if args.format == "toml" else json.dumps(cfg.to_dict(), indent=2) + "\n"
            if args.write:
                Path(args.write).write_text(text, encoding="utf-8")
            else:
                sys.stdout.write(text)
            return 0
        cfg = load_config(args.config)
        kind = cfg.experiment.kind
        allowed = {"run": None, "sample": SAMPLE_KINDS, "dynamics": DYNAMICS_KINDS, "analyze": ANALYZE_KINDS}
        theory_only = False
        if allowed[args.command] is not None and kind not in allowed[args.command]:
            if args.command == "analyze":
                theory_only = True
            else:
                raise ConfigError(f"subcommand {args.command!r} does not run experiment kind {kind!r}")
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        res = execute(cfg, _out_dir(args, cfg), seed=args.seed, threads=args.threads, theory_only=theory_only)
        print(json.dumps({"csv": str(res["csv"]), "summary": str(res["summary"])}))
        return 0
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return 2
    except PartitiaError as exc:
        diag = {"error": type(exc).__name__, "message": str(exc)}
        if getattr(exc, "diagnostics", None):
            diag["diagnostics"] = _plain(exc.diagnostics)
        print(json.dumps(diag), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
