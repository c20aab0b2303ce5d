"""Command-line front end: simulate, optimize, scan, reproduce, export-fixtures.

Exit codes: 0 success, 2 configuration or input error, 3 target not reached.
``SPINCTRL_THREADS`` sets the default number of worker processes.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import __version__, bbnn, dynamics, mintime
from .controls import sample
from .dynamics import Metric, SimConfig
from .io import (
    ConfigError,
    ExperimentConfig,
    FixtureError,
    Manifest,
    OutputExistsError,
    check_writable,
    dump_json,
    export_fixtures,
    load_fixture,
    source_digest,
)
from .objectives import ObjectiveSpec

log = logging.getLogger("spinctrl")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TARGET = 3
THREADS_ENV = "SPINCTRL_THREADS"

SUMMARY_COLUMNS = ["bound", "method", "metric", "T_star", "status", "metric_value", "P1", "P2", "P3",
                   "simplex_x", "simplex_y"]


def default_workers() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1, got {n}")
    return n


def config_hash(data: dict) -> str:
    """Digest of the resolved config and the package source; gates ``--resume`` reuse."""
    payload = json.dumps({"config": data, "source": source_digest()}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


class Outputs:
    """Output directory that refuses to overwrite existing files unless forced."""

    def __init__(self, root, force: bool):
        self.root = Path(root)
        self.force = force

    def path(self, name: str) -> Path:
        return check_writable(self.root / name, self.force)

    def check(self, names) -> None:
        for name in names:
            p = self.root / name
            if p.exists() and not self.force:
                raise OutputExistsError(f"{p} exists; pass --force to overwrite")


# --- shared run exports -------------------------------------------------------

def state_record(psi) -> dict:
    pops = dynamics.populations(psi)
    pops = pops / pops.sum()
    x, y = dynamics.simplex_coords(*pops)
    return {"final_state": [[float(c.real), float(c.imag)] for c in psi],
            "populations": pops.tolist(), "simplex": [x, y],
            "concurrence": float(dynamics.concurrence(psi)), "fidelity": float(dynamics.bell_fidelity(psi))}


def export_result(result, spec: ObjectiveSpec, out: Outputs, prefix: str, manifest: Manifest) -> dict:
    """Trajectory CSV, density JSON, history CSV and parameter JSON for one optimizer result."""
    traj = dynamics.propagate(result.controls, spec.config)
    files = {
        "trajectory": traj.to_csv(out.path(f"{prefix}trajectory.csv")),
        "density": dynamics.write_density_matrix(traj.final_state, out.path(f"{prefix}density.json")),
        "history": result.write_history(out.path(f"{prefix}history.csv")),
    }
    if result.params is not None:
        files["params"] = result.write_params(out.path(f"{prefix}params.json"))
    for kind, p in files.items():
        manifest.add_artifact(p, kind)
    return {k: str(v) for k, v in files.items()}


# --- simulate -------------------------------------------------------------------

def load_control_source(source: str, bound: float | None):
    """Trig-coefficient fixture (name or path) or a trained network JSON."""
    path = Path(source)
    if path.suffix == ".json" and path.exists():
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise FixtureError(path, exc.lineno, exc.msg, exc.colno) from exc
        if isinstance(data, dict) and "architecture" in data:
            net = bbnn.BbnnNet.from_dict(data)
            if bound is not None:
                net.bound = bound
            return net
    params = load_fixture(source)
    if bound is not None:
        params = replace(params, bound=bound)
    return params


def cmd_simulate(args) -> int:
    source = load_control_source(args.controls, args.bound)
    bound = source.bound
    config = SimConfig(args.T, n_steps=args.n_steps, bound=bound, xi=args.xi)
    out = Outputs(args.out, args.force)
    out.check(["trajectory.csv", "density.json", "manifest.json"])
    manifest = Manifest("simulate", {"controls": args.controls, **config.to_dict()})
    t0 = time.perf_counter()
    if isinstance(source, bbnn.BbnnNet):
        controls = bbnn.realized_controls(source, config)
    else:
        controls = sample(source, config.horizon_T, config.n_steps)
    traj = dynamics.propagate(controls, config)
    manifest.add_timing("simulate", time.perf_counter() - t0)
    manifest.add_artifact(traj.to_csv(out.path("trajectory.csv")), "trajectory")
    manifest.add_artifact(dynamics.write_density_matrix(traj.final_state, out.path("density.json")), "density")
    manifest.write(out.path("manifest.json"))
    print(json.dumps(state_record(traj.final_state)))
    return EXIT_OK


# --- optimize -------------------------------------------------------------------

def resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if getattr(args, "config", None) else ExperimentConfig()
    overrides = {}
    for key in ("seed", "n_steps", "target_level", "restarts", "coarse_step", "resolution", "p"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    for key in ("methods", "metrics", "bounds"):
        val = getattr(args, key, None)
        if val:
            overrides[key] = val
    if overrides:
        cfg = ExperimentConfig.from_dict({**_config_input(cfg), **overrides})
    return cfg


def _config_input(cfg: ExperimentConfig) -> dict:
    d = cfg.to_dict()
    d["ranges"] = {float(k): v for k, v in d["ranges"].items()}
    return d


def make_spec(cfg: ExperimentConfig, metric, bound: float, T: float = 1.0) -> ObjectiveSpec:
    return ObjectiveSpec(metric, SimConfig(T, n_steps=cfg.n_steps, bound=bound, xi=cfg.xi, objective=metric),
                         cfg.target_level)


def cmd_optimize(args) -> int:
    cfg = resolve_config(args)
    method = mintime.canonical_method(args.method)
    spec = make_spec(cfg, args.metric, args.bound, args.T)
    out = Outputs(args.out, args.force)
    names = ["trajectory.csv", "density.json", "history.csv", "params.json", "summary.json", "manifest.json"]
    out.check(names)
    manifest = Manifest("optimize", {"experiment": cfg.to_dict(), "method": method, "metric": spec.metric.value,
                                     "bound": args.bound, "T": args.T})
    budget = cfg.method_budget(spec.metric)
    res = mintime.solve_at(method, spec, budget, seed=cfg.seed)
    manifest.add_timing("optimize", res.wall_time)
    export_result(res, spec, out, "", manifest)
    summary = {**res.summary(), **state_record(res.final_state), "T": args.T, "bound": args.bound,
               "metric": spec.metric.value, "reached": res.reached(spec.target_level)}
    manifest.add_artifact(dump_json(summary, out.path("summary.json")), "summary")
    manifest.write(out.path("manifest.json"))
    print(json.dumps({k: summary[k] for k in ("method", "metric", "T", "metric_value", "status", "reached")}))
    return EXIT_OK if summary["reached"] else EXIT_TARGET


# --- scan and reproduce -----------------------------------------------------

def run_cell(cfg: ExperimentConfig, method: str, metric: str, bound: float, out_dir,
             force: bool = False, workers: int = 1, T_range=None) -> dict:
    """One minimum-time scan with its exports; returns the JSON-able record."""
    out = Outputs(out_dir, force)
    spec = make_spec(cfg, metric, bound)
    lo, hi = T_range or cfg.scan_range(bound)
    scan_cfg = mintime.ScanConfig(method, spec, lo, hi, cfg.coarse_step, cfg.resolution, cfg.restarts,
                                  cfg.seed, cfg.method_budget(metric), workers)
    manifest = Manifest("scan", {"experiment": cfg.to_dict(), "method": method, "metric": metric,
                                 "bound": bound, "T_lo": lo, "T_hi": hi})
    r = mintime.find_min_time(scan_cfg)
    manifest.add_timing("scan", r.wall_seconds)
    with out.path("trials.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["T", "success", "metric_value", "wall_seconds", "status", "phase", "note"])
        for t in r.trials:
            w.writerow([repr(t.T), int(t.success), repr(t.metric_value), repr(t.wall_seconds), t.status,
                        t.phase, t.note])
    manifest.add_artifact(out.root / "trials.csv", "trials")
    record = {"method": method, "metric": metric, "bound": bound, "T_lo": lo, "T_hi": hi,
              "T_star": r.T_star, "status": r.status, "metric_value": r.metric_value,
              "wall_seconds": r.wall_seconds, "budget": r.budget, "seed": cfg.seed,
              "n_trials": len(r.trials), "config_hash": config_hash(cfg.to_dict())}
    if r.found:
        record.update(state_record(r.result.final_state))
        record["artifacts"] = export_result(r.result, spec.with_horizon(r.T_star), out, "", manifest)
    mintime.write_scan_report([r], out.path("scan.csv"))
    manifest.add_artifact(out.root / "scan.csv", "scan_report")
    manifest.write(out.path("manifest.json"))
    dump_json(record, out.path("cell.json"))
    return record


def cmd_scan(args) -> int:
    cfg = resolve_config(args)
    method = mintime.canonical_method(args.method)
    metric = Metric.parse(args.metric).value
    rng = cfg.scan_range(args.bound)
    lo = args.T_lo if args.T_lo is not None else rng[0]
    hi = args.T_hi if args.T_hi is not None else rng[1]
    Outputs(args.out, args.force).check(["scan.csv", "trials.csv", "manifest.json", "cell.json"])
    workers = args.workers or default_workers()
    rec = run_cell(cfg, method, metric, args.bound, args.out, args.force, workers, (lo, hi))
    print(json.dumps({k: rec[k] for k in ("method", "metric", "bound", "T_star", "status", "metric_value")}))
    return EXIT_OK if rec["T_star"] is not None else EXIT_TARGET


def cell_name(method: str, metric: str, bound: float) -> str:
    return f"{method}_{metric}_b{bound:g}"


def _cell_job(job):
    cfg, method, metric, bound, root, force = job
    return run_cell(cfg, method, metric, bound, Path(root) / cell_name(method, metric, bound), force)


def reproduce(cfg: ExperimentConfig, out_dir, force: bool = False, workers: int = 1,
              resume: bool = False) -> list[dict]:
    """Run the method x metric x bound grid and write the scan report, summary and manifest.

    With ``resume``, cells whose ``cell.json`` was produced under the same
    configuration are loaded instead of re-run.
    """
    root = Path(out_dir)
    top = Outputs(root, force or resume)
    top.check(["scan_report.csv", "summary.csv", "manifest.json"])
    digest = config_hash(cfg.to_dict())
    cells = [(m, k, b) for b in cfg.bounds for m in cfg.methods for k in cfg.metrics]
    done, jobs = {}, []
    for m, k, b in cells:
        cell_json = root / cell_name(m, k, b) / "cell.json"
        if resume and cell_json.exists():
            rec = json.loads(cell_json.read_text())
            if rec.get("config_hash") == digest:
                rec["resumed"] = True
                done[(m, k, b)] = rec
                continue
        if not (force or resume) and (root / cell_name(m, k, b)).exists():
            raise OutputExistsError(f"{root / cell_name(m, k, b)} exists; pass --force to overwrite")
        jobs.append((cfg, m, k, b, str(root), True))

    manifest = Manifest("reproduce", {"experiment": cfg.to_dict(), "config_hash": digest})
    t0 = time.perf_counter()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            for job, rec in zip(jobs, pool.map(_cell_job, jobs)):
                done[job[1:4]] = rec
    else:
        for job in jobs:
            log.info("running %s", cell_name(*job[1:4]))
            done[job[1:4]] = _cell_job(job)
    manifest.add_timing("grid", time.perf_counter() - t0)

    records = [done[c] for c in cells]
    rows = [{"bound": r["bound"], "method": r["method"], "metric": r["metric"],
             "T_star": r["T_star"] if r["T_star"] is not None else float("nan"),
             "metric_value": r["metric_value"], "wall_seconds": r["wall_seconds"]} for r in records]
    manifest.add_artifact(mintime.write_scan_report(rows, top.path("scan_report.csv")), "scan_report")
    with top.path("summary.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        w.writeheader()
        for r in records:
            pops = r.get("populations", [float("nan")] * 3)
            xy = r.get("simplex", [float("nan")] * 2)
            w.writerow({"bound": repr(r["bound"]), "method": r["method"], "metric": r["metric"],
                        "T_star": repr(r["T_star"]) if r["T_star"] is not None else "nan",
                        "status": r["status"], "metric_value": repr(r["metric_value"]),
                        "P1": repr(pops[0]), "P2": repr(pops[1]), "P3": repr(pops[2]),
                        "simplex_x": repr(xy[0]), "simplex_y": repr(xy[1])})
    manifest.add_artifact(root / "summary.csv", "summary")
    for r in records:
        manifest.add_run({k: r.get(k) for k in ("method", "metric", "bound", "T_star", "status",
                                                "wall_seconds", "seed")}
                         | {"dir": cell_name(r["method"], r["metric"], r["bound"]),
                            "resumed": bool(r.get("resumed"))})
        manifest.add_timing(cell_name(r["method"], r["metric"], r["bound"]), r["wall_seconds"])
    manifest.write(top.path("manifest.json"))
    return records


def cmd_reproduce(args) -> int:
    cfg = resolve_config(args)
    workers = args.workers or default_workers()
    records = reproduce(cfg, args.out, args.force, workers, args.resume)
    for r in records:
        T = "not found" if r["T_star"] is None else f"{r['T_star']:.2f}"
        print(f"bound={r['bound']:g} {r['method']:5s} {r['metric']:11s} T*={T:9s} "
              f"metric={r['metric_value']:.6f} wall={r['wall_seconds']:.1f}s")
    return EXIT_OK if all(r["T_star"] is not None for r in records) else EXIT_TARGET


def cmd_export_fixtures(args) -> int:
    for p in export_fixtures(args.out, args.force):
        print(p)
    return EXIT_OK


# --- argument parsing ---------------------------------------------------------

def _add_config_flags(p, grid: bool = False):
    p.add_argument("--config", help="JSON experiment config (or a manifest.json from an earlier run)")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-steps", dest="n_steps", type=int)
    p.add_argument("--target-level", dest="target_level", type=float)
    p.add_argument("--p", type=int, help="harmonics in the trigonometric series")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    if grid:
        p.add_argument("--restarts", type=int)
        p.add_argument("--coarse-step", dest="coarse_step", type=float)
        p.add_argument("--resolution", type=float)
        p.add_argument("--workers", type=int, help=f"worker processes (default ${THREADS_ENV} or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinctrl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    # also accept -v after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="propagate a stored control and export the trajectory")
    p.add_argument("--controls", required=True, help="fixture name, coefficient JSON or network JSON")
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--bound", type=float, help="override the control bound of the source")
    p.add_argument("--n-steps", dest="n_steps", type=int, default=1000)
    p.add_argument("--xi", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("optimize", parents=[common], help="run one optimizer at a fixed horizon")
    p.add_argument("--method", required=True, choices=["pso", "local", "slsqp", "bbnn"])
    p.add_argument("--metric", required=True, choices=["concurrence", "fidelity"])
    p.add_argument("--bound", type=float, default=1.0)
    p.add_argument("--T", type=float, required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("scan", parents=[common], help="minimum-time search for one method, metric and bound")
    p.add_argument("--method", required=True, choices=["pso", "local", "slsqp", "bbnn"])
    p.add_argument("--metric", required=True, choices=["concurrence", "fidelity"])
    p.add_argument("--bound", type=float, default=1.0)
    p.add_argument("--T-lo", dest="T_lo", type=float)
    p.add_argument("--T-hi", dest="T_hi", type=float)
    _add_config_flags(p, grid=True)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("reproduce", parents=[common], help="full method x metric x bound grid")
    p.add_argument("--bounds", nargs="+", type=float)
    p.add_argument("--methods", nargs="+")
    p.add_argument("--metrics", nargs="+")
    p.add_argument("--resume", action="store_true", help="reuse finished cells run with the same config")
    _add_config_flags(p, grid=True)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("export-fixtures", parents=[common], help="copy the bundled coefficient fixtures")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_export_fixtures)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except FixtureError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, OutputExistsError, dynamics.ControlError, ValueError, KeyError) as exc:
        print(f"spinctrl: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
