"""Command-line entry point: run one experiment, verify the battery, or
project a report table into plot data."""

from __future__ import annotations

import argparse
import copy
import csv
import filecmp
import json
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from .config import ConfigError, OutputConfig, load_config, parse_config
from .experiments import Report, exit_code, fmt, run, write_report

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3

_TREE_F2 = {"model": {"kind": "tree", "k": 2}, "group": {"kind": "full"}}
_AB_IN_F3 = {"model": {"kind": "tree", "k": 3}, "group": {"kind": "subgroup", "words": ["a", "b"]}}
_HALF_PLANE = {"model": {"kind": "half-plane"}, "group": {"kind": "trivial"}}
_SCHOTTKY = {"model": {"kind": "half-plane"}, "group": {"kind": "classical-schottky"}}


def _job(criterion: str, label: str, experiment: str, base: dict, params: dict, expect: int = EXIT_OK) -> dict:
    cfg = copy.deepcopy(base)
    cfg.update(experiment=experiment, params=params, seed=0)
    cfg["output"] = {"prefix": f"c{criterion}-{label}"}
    return {"criterion": criterion, "label": label, "config": cfg, "expect": expect}


def battery(profile: str) -> list[dict]:
    """The acceptance battery. The quick profile halves radii and windows and
    thins the sampled checks; tolerances are never relaxed. Every entry
    expects exit 0 except the deliberately mutated shadow run."""
    if profile not in ("quick", "full"):
        raise ConfigError("profile must be quick or full")
    q = profile == "quick"
    half = (lambda x: max(2, x // 2)) if q else (lambda x: x)
    thin = (lambda x: max(1, x // 10)) if q else (lambda x: x)
    n_window = {"n_min": 3, "n_max": 6} if q else {"n_min": 6, "n_max": 12}
    e_window = {"n_min": 3, "n_max": 6} if q else {"n_min": 6, "n_max": 10}
    t_window = {"T_min": 3, "T_max": 6} if q else {"T_min": 6, "T_max": 10}
    crit = {"radius": half(12), "window": half(4)}
    shadow = {"instances": thin(10_000), "samples": 20}
    return [
        _job("1", "tree", "roblin", _TREE_F2, crit),
        # the half-plane gap only closes at larger radii, so it keeps its full size
        _job("1", "schottky", "roblin", _SCHOTTKY, {"radius": 14, "window": 4, "gap_tol": 0.05}),
        _job("2", "ab-in-f3", "bishop-jones", _AB_IN_F3, {**n_window, **crit}),
        _job("3", "ab-in-f3", "dimension-chain", {**_AB_IN_F3, "group": {**_AB_IN_F3["group"], "basepoint": "c"}}, {**n_window, **crit}),
        _job("4", "tree", "shadow-lemma", _TREE_F2, shadow),
        _job("4", "half-plane", "shadow-lemma", _HALF_PLANE, {"instances": thin(1_000), "samples": 20}),
        _job("4", "mutated", "shadow-lemma", _TREE_F2, {**shadow, "mutate": True}, expect=EXIT_FAIL),
        _job("5", "tree", "delta-audit", _TREE_F2, {"quadruples": thin(100_000)}),
        _job("5", "half-plane", "delta-audit", _HALF_PLANE, {"quadruples": thin(100_000)}),
        _job("6", "tree", "f-metric", _TREE_F2, {"pairs": thin(1_000)}),
        _job("7", "tree", "key-lemma", _TREE_F2, {}),
        _job("8", "rose", "main-theorem", _TREE_F2, {**e_window, **crit}),
        _job("8", "ab-in-f3", "bowen", _AB_IN_F3, {**e_window, "tau": 2}),
        _job("9", "full", "lip-top", _TREE_F2, t_window),
        _job("9", "ab-in-f3", "lip-top", _AB_IN_F3, t_window),
        {"criterion": "10", "label": "determinism", "config": _job("8", "rose", "main-theorem", _TREE_F2, {**e_window, **crit})["config"], "expect": None},
    ]


def _output_files(out_dir: str) -> list[str]:
    return sorted(f for f in os.listdir(out_dir) if not f.endswith(".timing.json"))


def _determinism(cfg_dict: dict) -> tuple[bool, str]:
    """Run twice into fresh directories and compare every output byte."""
    with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
        for d in (a, b):
            cfg = parse_config(cfg_dict)
            rep = run(cfg)
            write_report(rep, d, cfg.prefix)
            _plot_files(os.path.join(d, f"{cfg.prefix}.json"), d)
        fa, fb = _output_files(a), _output_files(b)
        same = fa == fb and all(filecmp.cmp(os.path.join(a, f), os.path.join(b, f), shallow=False) for f in fa)
    return same, f"{len(fa)} files compared"


def _plot_files(report_path: str, out_dir: str) -> None:
    with open(report_path, encoding="utf-8") as fh:
        rep = Report.from_dict(json.load(fh))
    for kind, table in PLOT_KINDS.items():
        if any(t.name == table for t in rep.tables):
            _write_plot(rep, kind, os.path.join(out_dir, f"plot-{kind}.csv"))


def run_job(job: dict, out_dir: str) -> dict:
    """Execute one battery entry; returns a picklable summary."""
    t0 = time.perf_counter()
    if job["expect"] is None:
        ok, detail = _determinism(job["config"])
        return {**job, "code": EXIT_OK if ok else EXIT_FAIL, "passed": ok, "detail": detail, "seconds": time.perf_counter() - t0}
    cfg = parse_config(job["config"])
    rep = run(cfg)
    write_report(rep, out_dir, cfg.prefix)
    code = exit_code(rep)
    failed = [v.id for v in rep.verdicts if not v.passed]
    detail = rep.status if not failed else "failed: " + ", ".join(failed)
    return {**job, "code": code, "passed": code == job["expect"], "detail": detail, "seconds": time.perf_counter() - t0}


def worker_count(jobs: int) -> int:
    raw = os.environ.get("GROMLAB_THREADS")
    if raw is None:
        return max(1, min(jobs, os.cpu_count() or 1))
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"GROMLAB_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"GROMLAB_THREADS must be a positive integer, got {raw!r}")
    return min(n, jobs)


def verify(profile: str, out_dir: str, stream=sys.stdout) -> int:
    jobs = battery(profile)
    workers = worker_count(len(jobs))
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.perf_counter()
    if workers == 1:
        results = [run_job(j, out_dir) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_job, jobs, [out_dir] * len(jobs)))
    elapsed = time.perf_counter() - t0
    summary = Report("verify", {"profile": profile})
    summary.add(
        "criteria",
        ["criterion", "label", "experiment", "exit_code", "expected", "passed"],
        [(r["criterion"], r["label"], r["config"]["experiment"] if r["expect"] is not None else "determinism", r["code"], r["expect"] if r["expect"] is not None else 0, r["passed"]) for r in results],
    )
    for r in results:
        summary.check(f"{r['criterion']}.{r['label']}", r["code"], r["expect"] if r["expect"] is not None else 0, r["passed"], r["detail"])
        mark = "PASS" if r["passed"] else "FAIL"
        print(f"[{mark}] criterion {r['criterion']:>2} {r['label']:<12} {r['detail']} ({r['seconds']:.1f}s)", file=stream)
    if profile == "quick":
        summary.check("10.quick-runtime", elapsed, 60.0, elapsed < 60.0, f"wall time with {workers} worker(s)")
        print(f"[{'PASS' if elapsed < 60 else 'FAIL'}] criterion 10 quick-runtime {elapsed:.1f}s < 60s", file=stream)
    summary.status = "complete"
    summary.runtime = elapsed
    write_report(summary, out_dir, "verify")
    return EXIT_OK if summary.passed else EXIT_FAIL


PLOT_KINDS = {"growth-curve": "growth", "dim-slopes": "dimension", "entropy-slopes": "entropy"}


def _write_plot(rep: Report, kind: str, path: str) -> None:
    table = rep.table(PLOT_KINDS[kind])
    rows = [(n, math.log(c) / n) for n, c in zip(table.column(table.columns[0]), table.column(table.columns[1])) if n > 0 and c > 0]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["scale", "value"])
        for n, v in rows:
            w.writerow([fmt(n), fmt(v)])


def plotdata(report_path: str, kind: str, out: str | None) -> str:
    try:
        with open(report_path, encoding="utf-8") as fh:
            rep = Report.from_dict(json.load(fh))
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as err:
        raise ConfigError(f"cannot read report {report_path}: {err}") from None
    if not any(t.name == PLOT_KINDS[kind] for t in rep.tables):
        raise ConfigError(f"report has no '{PLOT_KINDS[kind]}' table for {kind}")
    if out is None:
        stem = report_path[:-5] if report_path.endswith(".json") else report_path
        out = f"{stem}-{kind}.csv"
    _write_plot(rep, kind, out)
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gromlab", description="Desk-scale experiments on trees and the hyperbolic plane.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment from a JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--out", help="output directory (overrides the config)")
    v = sub.add_parser("verify", help="run the acceptance battery")
    v.add_argument("--profile", choices=["quick", "full"], default="quick")
    v.add_argument("--out", default="gromlab-verify")
    p = sub.add_parser("plotdata", help="two-column CSV from a report table")
    p.add_argument("--report", required=True)
    p.add_argument("--kind", required=True, choices=sorted(PLOT_KINDS))
    p.add_argument("--out")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as err:
        return EXIT_CONFIG if err.code else EXIT_OK
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            if args.seed is not None:
                if args.seed < 0:
                    raise ConfigError("--seed must be non-negative")
                cfg = replace(cfg, seed=args.seed)
            if args.out is not None:
                cfg = replace(cfg, output=OutputConfig(args.out, cfg.output.prefix))
            rep = run(cfg)
            for path in write_report(rep, cfg.output.dir, cfg.prefix):
                print(path)
            for v in rep.verdicts:
                print(f"[{'PASS' if v.passed else 'FAIL'}] {v.id}: measured {fmt(v.measured)} vs {fmt(v.tolerance)}")
            if rep.status == "budget-exceeded":
                print(f"budget exceeded: {rep.error}", file=sys.stderr)
            return exit_code(rep)
        if args.command == "verify":
            return verify(args.profile, args.out)
        print(plotdata(args.report, args.kind, args.out))
        return EXIT_OK
    except ConfigError as err:
        print(f"gromlab: error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
