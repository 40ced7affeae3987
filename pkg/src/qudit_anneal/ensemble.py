"""Random spin-glass ensembles and two-state vs four-state gap comparisons.

Instances draw biases and couplings i.i.d. uniformly from the 15-value set
{0, +-1/7, ..., +-1} on a fixed graph (complete bipartite K_{4,4} by
default).  Each instance has its own counter-based random stream keyed by
(seed, index), so instance k is reproducible without replaying a sequential
stream and generation parallelizes trivially.

Degenerate ground states are filtered with exact integer arithmetic before
any gap is computed; the comparison then sweeps both models on identical
grids and aggregates relative gap changes.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .model import AnnealSchedule, IsingProblem
from .spectrum import GapSweepResult, classical_ground, min_gap_sweep

__all__ = [
    "PAPER_VALUE_SET",
    "EnsembleConfig",
    "ComparisonRecord",
    "complete_bipartite_edges",
    "generate_instance",
    "filter_degenerate",
    "run_comparison",
    "run_comparison_on",
    "records_to_csv",
    "summarize_records",
    "summary_to_json",
]

PAPER_VALUE_SET = tuple(k / 7 for k in range(-7, 8))

COMPARISON_CSV_HEADER = ("instance_id", "g_min_two", "s_star_two",
                         "g_min_four", "s_star_four", "rel_change")


def complete_bipartite_edges(a: int, b: int) -> tuple[tuple[int, int], ...]:
    """Edges of K_{a,b}: left block 0..a-1, right block a..a+b-1."""
    return tuple((i, a + j) for i in range(a) for j in range(b))


@dataclass(frozen=True)
class EnsembleConfig:
    """Graph, instance count, base seed, and the coefficient value set."""

    n: int
    edges: tuple[tuple[int, int], ...]
    instance_count: int
    seed: int
    value_set: tuple[float, ...] = PAPER_VALUE_SET

    def __init__(self, n: int, edges: Iterable[tuple[int, int]],
                 instance_count: int, seed: int,
                 value_set: Sequence[float] = PAPER_VALUE_SET):
        n = int(n)
        norm = []
        seen = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if not (0 <= i < j < n):
                raise ValueError(f"edge ({i},{j}) must satisfy 0 <= i < j < n={n}")
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i},{j})")
            seen.add((i, j))
            norm.append((i, j))
        norm.sort()
        if int(instance_count) < 1:
            raise ValueError("instance_count must be >= 1")
        if len(value_set) < 2:
            raise ValueError("value set needs at least two values")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", tuple(norm))
        object.__setattr__(self, "instance_count", int(instance_count))
        object.__setattr__(self, "seed", int(seed))
        object.__setattr__(self, "value_set",
                           tuple(float(v) for v in value_set))

    @classmethod
    def complete_bipartite(cls, a: int, b: int, instance_count: int,
                           seed: int,
                           value_set: Sequence[float] = PAPER_VALUE_SET
                           ) -> "EnsembleConfig":
        return cls(a + b, complete_bipartite_edges(a, b), instance_count,
                   seed, value_set)

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "edges": [list(e) for e in self.edges],
            "instance_count": self.instance_count,
            "seed": self.seed,
            "value_set": list(self.value_set),
        }


def generate_instance(config: EnsembleConfig, index: int) -> IsingProblem:
    """Instance `index` of the ensemble, from its own Philox stream."""
    if not 0 <= index:
        raise ValueError("index must be non-negative")
    bits = np.random.Philox(key=config.seed, counter=[0, 0, int(index), 0])
    rng = np.random.Generator(bits)
    values = np.asarray(config.value_set)
    h = values[rng.integers(0, len(values), size=config.n)]
    j = values[rng.integers(0, len(values), size=len(config.edges))]
    couplings = [(i, jj, float(v)) for (i, jj), v in zip(config.edges, j)]
    return IsingProblem(config.n, [float(x) for x in h], couplings)


def filter_degenerate(problems: Iterable[IsingProblem]
                      ) -> tuple[list[IsingProblem], list[IsingProblem]]:
    """Split problems into (unique classical ground, degenerate ground).

    The decision uses exact integer arithmetic, never a tolerance.
    """
    kept, rejected = [], []
    for p in problems:
        if classical_ground(p).degeneracy == 1:
            kept.append(p)
        else:
            rejected.append(p)
    return kept, rejected


@dataclass(frozen=True)
class ComparisonRecord:
    """Per-instance minimum-gap pair for the two models."""

    instance_id: int
    h: tuple[float, ...]
    couplings: tuple[tuple[int, int, float], ...]
    g_min_two: float
    s_star_two: float
    g_min_four: float
    s_star_four: float

    @property
    def relative_change(self) -> float:
        return (self.g_min_four - self.g_min_two) / self.g_min_two


def _comparison_job(payload):
    (instance_id, model, problem, schedule, grid_points, refine_tol,
     omega_p_scale, kappa_scale, solver, tol, max_iter, seed) = payload
    sweep = min_gap_sweep(
        schedule, problem, model, grid_points=grid_points,
        refine_tol=refine_tol, omega_p_scale=omega_p_scale,
        kappa_scale=kappa_scale, solver=solver, tol=tol, max_iter=max_iter,
        seed=seed)
    return instance_id, model, sweep


def _instance_seed(config_seed: int, instance_id: int, model: str) -> int:
    code = 0 if model == "two_state" else 1
    return int(np.random.SeedSequence(
        entropy=config_seed, spawn_key=(instance_id, code)).generate_state(1)[0])


def run_comparison(config: EnsembleConfig, schedule: AnnealSchedule, *,
                   grid_points: int = 201, refine_tol: float = 1e-5,
                   omega_p_scale: float = 1.0, kappa_scale: float = 1.0,
                   solver: str = "auto", tol: float = 1e-9,
                   max_iter: int = 5000, threads: int = 1,
                   small_gap_count: int = 5,
                   ) -> tuple[list[ComparisonRecord], dict, list[dict]]:
    """Generate, filter, and sweep the ensemble in both models.

    Returns (records, summary, failures).
    """
    problems = {idx: generate_instance(config, idx)
                for idx in range(config.instance_count)}
    records, summary, failures = run_comparison_on(
        problems, schedule, base_seed=config.seed, grid_points=grid_points,
        refine_tol=refine_tol, omega_p_scale=omega_p_scale,
        kappa_scale=kappa_scale, solver=solver, tol=tol, max_iter=max_iter,
        threads=threads, small_gap_count=small_gap_count)
    summary["instances_total"] = config.instance_count
    return records, summary, failures


def run_comparison_on(problems: dict[int, IsingProblem],
                      schedule: AnnealSchedule, *, base_seed: int,
                      grid_points: int = 201, refine_tol: float = 1e-5,
                      omega_p_scale: float = 1.0, kappa_scale: float = 1.0,
                      solver: str = "auto", tol: float = 1e-9,
                      max_iter: int = 5000, threads: int = 1,
                      small_gap_count: int = 5,
                      ) -> tuple[list[ComparisonRecord], dict, list[dict]]:
    """Sweep an explicit id -> problem map in both models.

    Degenerate instances are excluded exactly before any sweep.  Work is
    queued over (instance, model) pairs; records aggregate in instance-id
    order so the output is identical for any thread count.  Per-instance
    failures are recorded and the run continues.
    """
    kept_ids = [idx for idx, p in sorted(problems.items())
                if classical_ground(p).degeneracy == 1]

    jobs = []
    for idx in kept_ids:
        for model in ("two_state", "four_state"):
            jobs.append((idx, model, problems[idx], schedule, grid_points,
                         refine_tol, omega_p_scale, kappa_scale, solver, tol,
                         max_iter, _instance_seed(base_seed, idx, model)))

    sweeps: dict[tuple[int, str], GapSweepResult] = {}
    failures: list[dict] = []
    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = {pool.submit(_comparison_job, job): job for job in jobs}
            from concurrent.futures import as_completed
            for fut in as_completed(futures):
                job = futures[fut]
                try:
                    idx, model, sweep = fut.result()
                    sweeps[(idx, model)] = sweep
                except Exception as exc:  # recorded, run continues
                    failures.append({"instance_id": job[0], "model": job[1],
                                     "error": str(exc)})
    else:
        for job in jobs:
            try:
                idx, model, sweep = _comparison_job(job)
                sweeps[(idx, model)] = sweep
            except Exception as exc:
                failures.append({"instance_id": job[0], "model": job[1],
                                 "error": str(exc)})

    records = []
    for idx in kept_ids:
        two = sweeps.get((idx, "two_state"))
        four = sweeps.get((idx, "four_state"))
        if two is None or four is None:
            continue
        p = problems[idx]
        records.append(ComparisonRecord(
            instance_id=idx, h=p.h, couplings=p.couplings,
            g_min_two=two.g_min, s_star_two=two.s_star,
            g_min_four=four.g_min, s_star_four=four.s_star))
    summary = summarize_records(records, small_gap_count=small_gap_count)
    summary["instances_considered"] = len(problems)
    summary["instances_kept"] = len(kept_ids)
    summary["kept_fraction"] = len(kept_ids) / max(len(problems), 1)
    summary["failures"] = len(failures)
    return records, summary, failures


def summarize_records(records: Sequence[ComparisonRecord],
                      small_gap_count: int = 5) -> dict:
    """Signed and absolute relative-change statistics, plus the small-gap
    subset (the small_gap_count smallest g_min_two instances)."""
    out: dict = {"records": len(records)}
    if not records:
        return out
    rel = [r.relative_change for r in records]
    arel = [abs(x) for x in rel]
    out.update({
        "mean_rel_change": statistics.fmean(rel),
        "median_rel_change": statistics.median(rel),
        "mean_abs_rel_change": statistics.fmean(arel),
        "median_abs_rel_change": statistics.median(arel),
        "max_reduction": min(rel),
        "max_increase": max(rel),
    })
    small = sorted(records, key=lambda r: (r.g_min_two, r.instance_id))
    small = small[:small_gap_count]
    srel = [r.relative_change for r in small]
    out["small_gap"] = {
        "count": len(small),
        "instance_ids": [r.instance_id for r in small],
        "mean_abs_rel_change": statistics.fmean(abs(x) for x in srel),
        "max_reduction": min(srel),
    }
    return out


def records_to_csv(records: Sequence[ComparisonRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPARISON_CSV_HEADER)
    for r in sorted(records, key=lambda r: r.instance_id):
        w.writerow([r.instance_id, repr(r.g_min_two), repr(r.s_star_two),
                    repr(r.g_min_four), repr(r.s_star_four),
                    repr(r.relative_change)])
    return buf.getvalue()


def summary_to_json(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"
