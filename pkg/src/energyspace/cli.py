"""Command-line runner: ``run``, ``compare``, ``sweep``, ``verify`` and ``list``.

Exit codes: 0 success, 1 configuration or schema error, 2 simulation error.
``ENERGYSPACE_WORKERS`` sets the worker-pool size for ``compare`` and
``sweep`` (default: the number of logical cores).
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import os
import platform
import random
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__, report
from .analysis import certificate_for
from .config import (ConfigError, apply_overrides, build_scenario, config_hash, get_path,
                     load_config, parse_value, resolve_scenario_path, set_path, shipped_scenarios)
from .metrics import compute_metrics, residual_monitors
from .sim import SchemaError, SimulationError, Trajectory, simulate

log = logging.getLogger("energyspace")

EXIT_OK, EXIT_CONFIG, EXIT_SIM = 0, 1, 2
WORKERS_ENV = "ENERGYSPACE_WORKERS"
ENERGY_LAWS = ("fblc", "smc")


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(WORKERS_ENV, f"not an integer: {raw!r}") from None
        if n < 1:
            raise ConfigError(WORKERS_ENV, "must be at least 1")
        return n
    return os.cpu_count() or 1


def _effective_config(args) -> tuple[dict, Path]:
    path = resolve_scenario_path(args.scenario)
    cfg = load_config(path)
    cfg = apply_overrides(cfg, args.set, step=args.step, horizon=args.horizon,
                          delay_steps=args.delay_steps,
                          controller=getattr(args, "controller", None))
    return cfg, path


def _manifest(out: Path, command: str, scenario: Path | None, cfg: dict | None, seed: int | None,
              outputs: list[str], status: str, extra: dict | None = None) -> dict:
    doc = {
        "tool": "energyspace",
        "version": __version__,
        "command": command,
        "scenario_file": str(scenario) if scenario else None,
        "output_dir": str(out),
        "seed": seed,
        "config_hash": config_hash(cfg) if cfg is not None else None,
        "config": cfg,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "status": status,
        "outputs": sorted(outputs),
    }
    doc.update(extra or {})
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")
    return doc


def _metrics_doc(traj: Trajectory, cfg: dict) -> dict:
    m = compute_metrics(traj, window=get_path(cfg, "metrics.window"),
                        band_basis=get_path(cfg, "metrics.band_basis", "span"))
    return m.as_dict()


def _certificate(traj: Trajectory, cfg: dict, law: str, scn=None):
    if law not in ENERGY_LAWS:
        return None
    gains = scn.controller.gains if scn is not None else None
    if gains is None:
        from .config import gains_for
        gains = gains_for(cfg, law)
    kw = {}
    if law == "smc" and get_path(cfg, "certificate.Mbar") is not None:
        kw["Mbar"] = float(get_path(cfg, "certificate.Mbar"))
    return certificate_for(traj, law, gains, **kw)


# -- run ------------------------------------------------------------------

def _run_one(cfg: dict, base_dir: Path, controller: str | None = None) -> dict:
    """Simulate one configuration; never raises for simulation failures."""
    scn = build_scenario(cfg, base_dir, controller)
    law = controller or get_path(cfg, "controller.kind")
    try:
        traj = simulate(scn)
        error = None
    except SimulationError as exc:
        traj = exc.partial
        error = str(exc)
    result: dict[str, Any] = {"controller": law, "traj": traj, "error": error}
    if error is None:
        result["metrics"] = _metrics_doc(traj, cfg)
        cert = _certificate(traj, cfg, law, scn)
        result["certificate"] = cert
        if cert is not None:
            result["metrics"]["certificate_violations"] = cert.violations
    return result


def cmd_run(args) -> int:
    cfg, path = _effective_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = _run_one(cfg, path.parent)
    traj: Trajectory = res["traj"]
    outputs = ["trajectory.csv"]
    traj.to_csv(out / "trajectory.csv")
    if res["error"] is None:
        (out / "metrics.txt").write_text(report.dumps(res["metrics"], title="metrics"))
        outputs.append("metrics.txt")
        resid = residual_monitors(traj, allow_decimated=True)
        (out / "residuals.txt").write_text(report.dumps(resid, title="residual monitors"))
        outputs.append("residuals.txt")
        if res["certificate"] is not None:
            (out / "certificate.txt").write_text(res["certificate"].dumps())
            outputs.append("certificate.txt")
        if not args.no_plots:
            from .plotting import plot_panels
            figs = plot_panels({res["controller"]: traj}, cfg["plant"]["kind"], out,
                               reference=float(traj["y_ref"][0]))
            outputs.extend(p.name for p in figs)
    else:
        (out / "error.txt").write_text(res["error"] + "\n")
        outputs.append("error.txt")
    _manifest(out, "run", path, cfg, None, outputs, "ok" if res["error"] is None else "simulation-error",
              {"trajectory_meta": traj.meta})
    if res["error"] is not None:
        log.error("%s", res["error"])
        return EXIT_SIM
    m = res["metrics"]
    print(f"{cfg.get('name')}: steady_state_error={m['steady_state_error']:.6g} "
          f"settling_time_2pct={m['settling_time_2pct']:.6g} overshoot={m['overshoot']:.6g}")
    return EXIT_OK


# -- compare --------------------------------------------------------------

def _compare_job(job):
    cfg, base_dir, controller = job
    res = _run_one(cfg, base_dir, controller)
    cert = res.pop("certificate", None)
    res["certificate"] = cert.as_dict() if cert is not None else None
    return res


def _pool_map(fn, jobs: list, seed: int | None = None) -> list:
    """Run ``fn`` over ``jobs``; results come back in job order regardless of scheduling."""
    order = list(range(len(jobs)))
    if seed is not None:
        random.Random(seed).shuffle(order)
    n = min(worker_count(), max(len(jobs), 1))
    results: list = [None] * len(jobs)
    if n <= 1:
        for i in order:
            results[i] = fn(jobs[i])
        return results
    with ProcessPoolExecutor(max_workers=n) as pool:
        futs = {i: pool.submit(fn, jobs[i]) for i in order}
        for i, f in futs.items():
            results[i] = f.result()
    return results


TABLE_FIELDS = ("controller", "status", "settling_time_2pct", "settled", "overshoot",
                "steady_state_error", "effort_l2", "effort_tv", "reaching_time",
                "certificate_violations")


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return format(v, ".10g")
    return "" if v is None else str(v)


def cmd_compare(args) -> int:
    cfg, path = _effective_config(args)
    names = args.controllers.split(",") if args.controllers else get_path(cfg, "compare.controllers")
    if not names:
        raise ConfigError("compare.controllers", "no controllers to compare")
    for name in names:
        build_scenario(cfg, path.parent, name)  # validate every member before running
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = _pool_map(_compare_job, [(cfg, path.parent, n) for n in names], args.seed)
    rows, runs, outputs, failed = [], {}, [], False
    for res in results:
        name = res["controller"]
        res["traj"].to_csv(out / f"trajectory_{name}.csv")
        outputs.append(f"trajectory_{name}.csv")
        if res["error"] is not None:
            failed = True
            rows.append({"controller": name, "status": "failed"})
            continue
        runs[name] = res["traj"]
        rows.append({"controller": name, "status": "ok", **res["metrics"]})
    with open(out / "comparison.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_FIELDS)
        for r in rows:
            w.writerow([_fmt_cell(r.get(k)) for k in TABLE_FIELDS])
    outputs.append("comparison.csv")
    if runs:
        _write_aligned(runs, out / "compare_series.csv")
        outputs.append("compare_series.csv")
        if not args.no_plots:
            from .plotting import plot_panels
            ref = float(next(iter(runs.values()))["y_ref"][0])
            outputs.extend(p.name for p in plot_panels(runs, cfg["plant"]["kind"], out, reference=ref))
    _manifest(out, "compare", path, cfg, args.seed, outputs, "failed" if failed else "ok",
              {"controllers": names})
    for r in rows:
        print("  ".join(f"{k}={_fmt_cell(r.get(k))}" for k in TABLE_FIELDS if k in r))
    return EXIT_SIM if failed else EXIT_OK


def _write_aligned(runs: dict, path: Path) -> None:
    """Plot-ready series on the common time grid (runs share t by construction)."""
    names = list(runs)
    n = min(len(runs[k]) for k in names)
    first = runs[names[0]]
    cols = ["t", "P_load"]
    data = [first.t[:n], first["P_load"][:n]]
    for name in names:
        for c in ("x0", "x1", "u", "y"):
            cols.append(f"{c}_{name}")
            data.append(runs[name][c][:n])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in zip(*data):
            w.writerow([format(float(v), ".17g") for v in row])


# -- sweep ----------------------------------------------------------------

def _parse_grid(cfg: dict, items: Sequence[str] | None) -> dict[str, list]:
    grid = dict(get_path(cfg, "sweep.grid", {}) or {})
    for item in items or []:
        key, sep, vals = item.partition("=")
        if not sep:
            raise ConfigError(item, "grid entries look like key=v1,v2,...")
        vals = vals.strip()
        grid[key.strip()] = [] if not vals else [parse_value(v.strip()) for v in vals.split(",")]
    for key, vals in grid.items():
        if not isinstance(vals, list):
            raise ConfigError(f"sweep.grid.{key}", "expected a list of values")
    return grid


def _sweep_job(job):
    cfg, base_dir, point = job
    rec: dict[str, Any] = dict(point)
    try:
        res = _run_one(cfg, base_dir)
    except ConfigError as exc:
        rec["status"] = f"config-error: {exc}"
        return rec
    if res["error"] is not None:
        rec["status"] = "failed"
        rec["error"] = res["error"]
        return rec
    rec["status"] = "ok"
    rec.update(res["metrics"])
    cert = res["certificate"]
    if cert is not None:
        rec["condition_violated"] = cert.condition_violated
        rec["certificate_violated"] = cert.certificate_violated
        rec["condition_violation_steps"] = cert.condition_violation_steps
        rec["v_increase_steps"] = cert.v_increase_steps
    return rec


SWEEP_METRICS = ("settling_time_2pct", "overshoot", "steady_state_error", "effort_l2", "effort_tv")


def run_sweep(cfg: dict, base_dir: Path, grid: dict[str, list], seed: int | None = None) -> list[dict]:
    keys = sorted(grid)
    if not keys or any(len(grid[k]) == 0 for k in keys):
        return []
    points = [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
    jobs = []
    for pt in points:
        c = json.loads(json.dumps(cfg))
        for k, v in pt.items():
            set_path(c, k, v)
        c.pop("sweep", None)
        jobs.append((c, base_dir, pt))
    recs = _pool_map(_sweep_job, jobs, seed)
    recs.sort(key=lambda r: tuple(_sort_key(r[k]) for k in keys))
    return recs


def _sort_key(v):
    return (0, v, "") if isinstance(v, (int, float)) and not isinstance(v, bool) else (1, 0, str(v))


def sweep_summary(recs: list[dict], keys: Sequence[str]) -> dict:
    out = {}
    ok = [r for r in recs if r.get("status") == "ok"]
    for m in SWEEP_METRICS:
        vals = [(r[m], i) for i, r in enumerate(ok) if isinstance(r.get(m), (int, float)) and math.isfinite(r[m])]
        if vals:
            best = min(vals)[1]
            out[f"best_{m}"] = json.dumps({k: ok[best][k] for k in keys}, sort_keys=True, default=str)
            out[f"best_{m}_value"] = ok[best][m]
    for flag in ("condition_violated", "certificate_violated"):
        first = next((i for i, r in enumerate(recs) if r.get(flag)), None)
        out[f"first_{flag}_index"] = -1 if first is None else first
    out["points"] = len(recs)
    out["failed"] = sum(1 for r in recs if r.get("status") != "ok")
    return out


def cmd_sweep(args) -> int:
    cfg, path = _effective_config(args)
    grid = _parse_grid(cfg, args.grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    recs = run_sweep(cfg, path.parent, grid, args.seed)
    keys = sorted(grid)
    fields = list(keys)
    for r in recs:
        for k in r:
            if k not in fields:
                fields.append(k)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        if fields:
            w.writerow(fields)
        for r in recs:
            w.writerow([_fmt_cell(r.get(k)) for k in fields])
    summary = sweep_summary(recs, keys)
    (out / "sweep_summary.txt").write_text(report.dumps(summary, title="sweep summary"))
    _manifest(out, "sweep", path, cfg, args.seed, ["sweep.csv", "sweep_summary.txt"], "ok",
              {"grid": grid})
    for r in recs:
        print("  ".join(f"{k}={_fmt_cell(r.get(k))}" for k in fields if k in r and k != "error"))
    return EXIT_OK


# -- verify ---------------------------------------------------------------

def cmd_verify(args) -> int:
    csv_path = Path(args.trajectory)
    manifest = csv_path.parent / "manifest.json"
    meta: dict = {}
    cfg = None
    scenario_file = None
    if args.scenario:
        cfg, scenario_file = _effective_config(args)
    elif manifest.is_file():
        doc = json.loads(manifest.read_text())
        cfg = apply_overrides(doc["config"], args.set, controller=args.controller)
        meta = doc.get("trajectory_meta") or {}
    else:
        raise ConfigError("--scenario", "needed when no manifest.json sits next to the trajectory")
    if "name" not in cfg:
        cfg["name"] = "verify"
    traj = Trajectory.from_csv(csv_path, meta)
    law = args.controller or get_path(cfg, "controller.kind")
    if law not in ENERGY_LAWS:
        raise ConfigError("controller.kind", f"certificates exist for {ENERGY_LAWS}, not {law!r}")
    cert = _certificate(traj, cfg, law)
    text = cert.dumps()
    out = Path(args.out) if args.out else csv_path.parent
    out.mkdir(parents=True, exist_ok=True)
    (out / "verify_certificate.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_list(args) -> int:
    for name in shipped_scenarios():
        print(name)
    return EXIT_OK


# -- entry point ------------------------------------------------------------

def _common(p: argparse.ArgumentParser, scenario_required: bool = True) -> None:
    p.add_argument("--scenario", required=scenario_required,
                   help="scenario file, or the name of a shipped scenario")
    p.add_argument("--step", type=float, help="integration step h [s]")
    p.add_argument("--horizon", type=float, help="horizon T [s]")
    p.add_argument("--delay-steps", type=int, dest="delay_steps", help="exchange delay in steps")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry by dotted path (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="energyspace", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario")
    _common(p)
    p.add_argument("--controller", help="override controller.kind")
    p.add_argument("--out", required=True)
    p.add_argument("--no-plots", action="store_true", dest="no_plots")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run one scenario under several controllers")
    _common(p)
    p.add_argument("--controllers", help="comma-separated list (default: [compare].controllers)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="shuffles execution order only")
    p.add_argument("--no-plots", action="store_true", dest="no_plots")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="metrics over a parameter grid")
    _common(p)
    p.add_argument("--controller", help="override controller.kind")
    p.add_argument("--grid", action="append", metavar="KEY=V1,V2,...",
                   help="grid axis by dotted config path (repeatable; adds to [sweep].grid)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="shuffles execution order only")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="certificate report for a recorded trajectory")
    _common(p, scenario_required=False)
    p.add_argument("--trajectory", required=True, help="trajectory CSV written by run")
    p.add_argument("--controller", help="law whose certificate to evaluate (fblc or smc)")
    p.add_argument("--out", help="directory for the report (default: next to the CSV)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("list", help="list shipped scenarios")
    p.set_defaults(func=cmd_list)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
