"""Command-line front end: instance generation, gap sweeps, ensemble
comparison, device-schedule extraction, and schedule validation.

Every command is deterministic given (flags, seed, input files); re-runs
produce byte-identical primary outputs regardless of thread count.  Exit
codes: 0 success, 2 usage/config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import re
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .ensemble import (EnsembleConfig, complete_bipartite_edges,
                       records_to_csv, run_comparison_on, summary_to_json)
from .model import AnnealSchedule, ScheduleError, load_instance, save_instance
from .spectrum import ConvergenceError, classical_ground, min_gap_sweep
from .squid import BistabilityError, build_schedule, load_device_config

THREADS_ENV = "QUDIT_ANNEAL_THREADS"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class _UsageError(Exception):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


class RunManifest:
    """Records what a command ran on and what it wrote; written atomically
    at run end.  Input hashes are stable for identical inputs."""

    def __init__(self, argv: list[str], seed: int | None):
        self.data = {
            "tool": "qudit-anneal",
            "version": __version__,
            "command": list(argv),
            "seed": seed,
            "inputs": {},
            "outputs": [],
            "started": _utcnow(),
            "finished": None,
        }

    def add_input(self, path: str | Path) -> None:
        p = Path(path)
        self.data["inputs"][str(p)] = _sha256(p)

    def add_output(self, path: str | Path) -> None:
        self.data["outputs"].append(str(path))

    def verify_against(self, manifest_path: Path) -> None:
        """Check current input hashes against a previous run's manifest."""
        if not manifest_path.exists():
            return
        try:
            old = json.loads(manifest_path.read_text())
        except json.JSONDecodeError as exc:
            raise _UsageError(f"unreadable manifest {manifest_path}: {exc}")
        for path, digest in old.get("inputs", {}).items():
            current = self.data["inputs"].get(path)
            if current is not None and current != digest:
                raise _UsageError(
                    f"input {path} changed since the recorded run "
                    f"(hash {current[:12]}... != {digest[:12]}...)")

    def write(self, path: Path) -> None:
        self.data["finished"] = _utcnow()
        _atomic_write(path, json.dumps(self.data, indent=2, sort_keys=True) + "\n")


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise _UsageError(f"{THREADS_ENV}={env!r} is not an integer")
    return os.cpu_count() or 1


def _parse_graph(spec: str) -> tuple[int, tuple[tuple[int, int], ...]]:
    """Accepts 'k44' / 'k4,4' / 'k4x4' for complete bipartite graphs."""
    m = re.fullmatch(r"[kK](\d+)[x,](\d+)", spec) or re.fullmatch(
        r"[kK](\d)(\d)", spec)
    if not m:
        raise _UsageError(
            f"unrecognized graph {spec!r}: use k<a>,<b> (e.g. k4,4 or k44)")
    a, b = int(m.group(1)), int(m.group(2))
    if a < 1 or b < 1:
        raise _UsageError("bipartite blocks must be non-empty")
    return a + b, complete_bipartite_edges(a, b)


def _load_edges_file(path: str) -> tuple[int, tuple[tuple[int, int], ...]]:
    d = json.loads(Path(path).read_text())
    if isinstance(d, dict):
        n = int(d["n"])
        edges = [tuple(e) for e in d["edges"]]
    else:
        edges = [tuple(e) for e in d]
        n = 1 + max(max(e) for e in edges)
    return n, tuple((int(i), int(j)) for i, j in edges)


def cmd_generate(args, argv) -> int:
    if args.count < 1:
        raise _UsageError(f"--count must be >= 1, got {args.count}")
    if args.edges:
        n, edges = _load_edges_file(args.edges)
    else:
        n, edges = _parse_graph(args.graph)
    config = EnsembleConfig(n, edges, args.count, args.seed)
    out = Path(args.out)
    manifest = RunManifest(argv, args.seed)
    if args.edges:
        manifest.add_input(args.edges)

    written: list[Path] = []
    try:
        inst_dir = out / "instances"
        inst_dir.mkdir(parents=True, exist_ok=True)
        entries = []
        kept_ids, rejected_ids = [], []
        from .ensemble import generate_instance
        for k in range(config.instance_count):
            problem = generate_instance(config, k)
            fname = f"instance_{k:05d}.json"
            fpath = inst_dir / fname
            save_instance(problem, fpath, seed=config.seed)
            written.append(fpath)
            entry = {"id": k, "file": f"instances/{fname}"}
            if args.filter_degenerate:
                degeneracy = classical_ground(problem).degeneracy
                entry["degeneracy"] = degeneracy
                entry["kept"] = degeneracy == 1
                (kept_ids if degeneracy == 1 else rejected_ids).append(k)
            entries.append(entry)
            manifest.add_output(str(fpath))
        doc = {"config": config.to_json_dict(), "instances": entries}
        if args.filter_degenerate:
            doc["kept_ids"] = kept_ids
            doc["rejected_ids"] = rejected_ids
            doc["kept_fraction"] = len(kept_ids) / config.instance_count
            print(f"kept {len(kept_ids)}/{config.instance_count} "
                  f"({doc['kept_fraction']:.4f}) non-degenerate instances")
        _atomic_write(out / "manifest.json",
                      json.dumps(doc, indent=2) + "\n")
        manifest.add_output(str(out / "manifest.json"))
        manifest.write(out / "run_manifest.json")
    except BaseException:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    print(f"wrote {config.instance_count} instances under {out}")
    return EXIT_OK


def cmd_gap(args, argv) -> int:
    instance_path = Path(args.instance)
    schedule_path = Path(args.schedule)
    for p in (instance_path, schedule_path):
        if not p.exists():
            raise _UsageError(f"missing input file: {p}")
    manifest = RunManifest(argv, args.seed)
    manifest.add_input(instance_path)
    manifest.add_input(schedule_path)
    out_prefix = Path(args.out)
    manifest_path = out_prefix.with_suffix(".manifest.json")
    if args.verify:
        manifest.verify_against(manifest_path)

    problem = load_instance(instance_path)
    schedule = AnnealSchedule.from_csv(schedule_path)
    model = "two_state" if args.model == "two" else "four_state"
    try:
        sweep = min_gap_sweep(
            schedule, problem, model, grid_points=args.grid,
            refine_tol=args.refine_tol, omega_p_scale=args.omega_p_scale,
            kappa_scale=args.kappa_scale, solver=args.solver,
            seed=args.seed, threads=_threads(args))
    except ConvergenceError as exc:
        sidecar = {
            "error": str(exc),
            "model": model,
            "instance_id": instance_path.stem,
            "seed": args.seed,
            "best_residuals": [float(x) for x in exc.best_residuals],
        }
        _atomic_write(out_prefix.with_suffix(".json"),
                      json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["s", "gap_ghz"])
    for s, g in sweep.samples:
        w.writerow([repr(float(s)), repr(float(g))])
    csv_path = out_prefix.with_suffix(".csv")
    _atomic_write(csv_path, buf.getvalue())
    sidecar = {
        "s_star": sweep.s_star,
        "g_min_ghz": sweep.g_min,
        "model": model,
        "instance_id": instance_path.stem,
        "seed": args.seed,
        "grid_points": args.grid,
        "refine_tol": args.refine_tol,
        "refine_iterations": sweep.refine_iterations,
        "bracket_width": sweep.bracket_width,
    }
    json_path = out_prefix.with_suffix(".json")
    _atomic_write(json_path, json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    manifest.add_output(str(csv_path))
    manifest.add_output(str(json_path))
    manifest.write(manifest_path)
    print(f"{model} minimum gap {sweep.g_min:.9g} GHz at s* = {sweep.s_star:.6g}")
    return EXIT_OK


def cmd_compare(args, argv) -> int:
    manifest_path_in = Path(args.manifest)
    schedule_path = Path(args.schedule)
    for p in (manifest_path_in, schedule_path):
        if not p.exists():
            raise _UsageError(f"missing input file: {p}")
    run_manifest = RunManifest(argv, None)
    run_manifest.add_input(manifest_path_in)
    run_manifest.add_input(schedule_path)
    out = Path(args.out)
    if args.verify:
        run_manifest.verify_against(out / "run_manifest.json")

    doc = json.loads(manifest_path_in.read_text())
    if "config" not in doc or "instances" not in doc:
        raise _UsageError("ensemble manifest needs 'config' and 'instances'")
    base_seed = int(doc["config"].get("seed", 0))
    run_manifest.data["seed"] = base_seed
    base_dir = manifest_path_in.parent
    problems = {}
    for entry in doc["instances"]:
        if entry.get("kept") is False:
            continue
        problems[int(entry["id"])] = load_instance(base_dir / entry["file"])
    schedule = AnnealSchedule.from_csv(schedule_path)

    records, summary, failures = run_comparison_on(
        problems, schedule, base_seed=base_seed, grid_points=args.grid,
        refine_tol=args.refine_tol, omega_p_scale=args.omega_p_scale,
        kappa_scale=args.kappa_scale, solver=args.solver,
        threads=_threads(args), small_gap_count=args.small_gap_count)
    if summary["instances_kept"] == 0:
        print("no instance has a non-degenerate classical ground state; "
              "nothing to compare", file=sys.stderr)
        return EXIT_CONFIG

    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "records.csv", records_to_csv(records))
    summary["omega_p_scale"] = args.omega_p_scale
    summary["kappa_scale"] = args.kappa_scale
    summary["grid_points"] = args.grid
    if failures:
        summary["failure_detail"] = failures
    _atomic_write(out / "summary.json", summary_to_json(summary))
    run_manifest.add_output(str(out / "records.csv"))
    run_manifest.add_output(str(out / "summary.json"))
    run_manifest.write(out / "run_manifest.json")

    done = len(records)
    wanted = summary["instances_kept"]
    print(f"compared {done}/{wanted} instances; median |rel change| = "
          f"{summary.get('median_abs_rel_change', float('nan')):.4g}")
    if done < 0.9 * wanted:
        print(f"too many per-instance failures ({len(failures)})",
              file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_squid_extract(args, argv) -> int:
    device_path = Path(args.device)
    if not device_path.exists():
        raise _UsageError(f"missing device config: {device_path}")
    if args.levels % 2 or args.levels < 2:
        raise _UsageError(f"--levels must be even and >= 2, got {args.levels}")
    manifest = RunManifest(argv, args.seed)
    manifest.add_input(device_path)
    out_path = Path(args.out)
    if args.verify:
        manifest.verify_against(out_path.with_suffix(".manifest.json"))

    device = load_device_config(device_path)
    if args.samples is not None:
        from dataclasses import replace
        device = replace(device, samples=args.samples)
    try:
        schedule, diagnostics = build_schedule(
            device, m=args.levels, grid_points=args.grid_points,
            seed=args.seed, threads=_threads(args))
    except BistabilityError as exc:
        print(f"extraction failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ScheduleError as exc:
        print(f"extracted table violates schedule invariants: {exc}",
              file=sys.stderr)
        return EXIT_NUMERICAL

    _atomic_write(out_path, schedule.to_csv_text())
    manifest.add_output(str(out_path))
    diag_path = Path(args.diagnostics) if args.diagnostics else (
        out_path.with_suffix(".diagnostics.json"))
    _atomic_write(diag_path, json.dumps(diagnostics, indent=2) + "\n")
    manifest.add_output(str(diag_path))
    manifest.write(out_path.with_suffix(".manifest.json"))
    print(f"wrote {device.samples}-sample schedule to {out_path}")
    return EXIT_OK


def cmd_validate_schedule(args, argv) -> int:
    path = Path(args.schedule)
    if not path.exists():
        raise _UsageError(f"missing schedule file: {path}")
    try:
        schedule = AnnealSchedule.from_csv(path)
    except ScheduleError as exc:
        print(f"invalid schedule: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"schedule OK: {schedule.s.shape[0]} knots, "
          f"delta(0) = {schedule.delta[0]:.6g} GHz, "
          f"e(1) = {schedule.e[-1]:.6g} GHz")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qudit-anneal",
        description="Spectral simulator for adiabatic optimization with "
                    "multi-level (qudit) devices")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common_solver(p):
        p.add_argument("--grid", type=int, default=201,
                       help="coarse sweep grid points (default 201)")
        p.add_argument("--refine-tol", type=float, default=1e-5,
                       help="golden-section bracket tolerance on s")
        p.add_argument("--solver", choices=["auto", "dense", "lanczos"],
                       default="auto")
        p.add_argument("--threads", type=int, default=None,
                       help=f"worker processes (default: ${THREADS_ENV} "
                            "or CPU count)")
        p.add_argument("--omega-p-scale", type=float, default=1.0,
                       help="multiply the schedule's omega_p column")
        p.add_argument("--kappa-scale", type=float, default=1.0,
                       help="multiply both kappa columns")
        p.add_argument("--verify", action="store_true",
                       help="check input hashes against the recorded manifest")

    g = sub.add_parser("generate", help="write random ensemble instances")
    g.add_argument("--graph", default="k44",
                   help="complete bipartite graph, e.g. k44 or k4,4")
    g.add_argument("--edges", default=None,
                   help="JSON edge-list file instead of --graph")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--filter-degenerate", action="store_true",
                   help="record the exact kept/rejected split")
    g.set_defaults(func=cmd_generate)

    p = sub.add_parser("gap", help="minimum-gap sweep for one instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--schedule", required=True)
    p.add_argument("--model", choices=["two", "four"], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output path prefix")
    add_common_solver(p)
    p.set_defaults(func=cmd_gap)

    c = sub.add_parser("compare", help="two-state vs four-state ensemble run")
    c.add_argument("--manifest", required=True,
                   help="ensemble manifest from `generate`")
    c.add_argument("--schedule", required=True)
    c.add_argument("--out", required=True, help="output directory")
    c.add_argument("--small-gap-count", type=int, default=5)
    add_common_solver(c)
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("squid-extract",
                       help="extract an annealing schedule from a device config")
    s.add_argument("--device", required=True)
    s.add_argument("--out", required=True, help="schedule CSV path")
    s.add_argument("--samples", type=int, default=None)
    s.add_argument("--levels", type=int, default=4, help="even level count M")
    s.add_argument("--grid-points", type=int, default=128)
    s.add_argument("--diagnostics", default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--threads", type=int, default=None)
    s.add_argument("--verify", action="store_true")
    s.set_defaults(func=cmd_squid_extract)

    v = sub.add_parser("validate-schedule", help="check schedule invariants")
    v.add_argument("--schedule", required=True)
    v.set_defaults(func=cmd_validate_schedule)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    try:
        return args.func(args, argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, json.JSONDecodeError, ScheduleError,
            ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, BistabilityError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
