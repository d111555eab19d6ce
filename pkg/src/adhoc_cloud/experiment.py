"""Turning configs into simulation runs, sweeps and the Monte-Carlo continuity check."""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
import random
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .config import ExperimentConfig, resolve_key
from .metrics import MetricsReport
from .placement import filter_receivers, select_receivers
from .reliability import HostView
from .server import PlacementPolicy, TimingConfig
from .simcore import (LoadModel, ProgressModel, SimConfig, Simulation, TransferModel, Workload,
                      run as run_simulation)
from .trace import ChurnTrace, busiest_window, generate_trace, load_trace, slice_trace


def sim_config(cfg: ExperimentConfig, check_invariants: bool = False) -> SimConfig:
    d = cfg.data
    return SimConfig(
        timing=TimingConfig(**d["timing"]),
        policy=PlacementPolicy(**d["placement"]),
        transfer=TransferModel(**d["transfer"]),
        progress=ProgressModel(**d["progress"]),
        load=LoadModel(**d["load"]),
        storage_capacity=int(d["hosts"]["storage_capacity"]),
        cloudlets=int(d["hosts"]["cloudlets"]),
        resource_limit=d["client"]["resource_limit"],
        sustain_window=int(d["client"]["sustain_window"]),
        guest_failure_rate=d["client"]["guest_failure_rate"],
        new_host_prior=d["reliability"]["new_host_prior"],
        retry_budget=int(d["retry_budget"]),
        horizon=d["horizon"],
        check_invariants=check_invariants,
    )


def build_trace(cfg: ExperimentConfig, seed: int) -> ChurnTrace:
    churn = cfg.data["churn"]
    path = cfg.trace_path()
    if path is not None:
        trace = load_trace(path)
    else:
        trace = generate_trace(int(cfg.data["hosts"]["count"]), churn["window"],
                               float(churn["mtbf"]), float(churn["mttr"]), seed)
    if churn["busiest_window"]:
        start, end = busiest_window(trace, churn["busiest_window"])
        trace = slice_trace(trace, start, end)
    return trace


def build_workload(cfg: ExperimentConfig) -> Workload:
    w = cfg.data["workload"]
    return Workload.uniform(int(w["jobs"]), float(w["total_work"]), int(w["snapshot_size"]),
                            float(w["arrival_interval"]))


def workload_id(workload: Workload) -> str:
    text = "\n".join(f"{j.submit_time!r} {j.total_work!r} {j.snapshot_size} {j.cloudlet}"
                     for j in workload.jobs)
    return hashlib.sha1(text.encode()).hexdigest()[:12]


@dataclass
class RunResult:
    report: MetricsReport
    log: object
    trace: ChurnTrace
    seed: int


def failure_free(trace: ChurnTrace) -> ChurnTrace:
    return ChurnTrace(trace.hosts, (), trace.window)


def run_once(cfg: ExperimentConfig, seed: Optional[int] = None, baseline: bool = True,
             check_invariants: bool = False, trace: Optional[ChurnTrace] = None) -> RunResult:
    """One simulation; with ``baseline`` also a churn-free twin for the makespan overhead."""
    seed = cfg.data["seed"] if seed is None else seed
    trace = trace if trace is not None else build_trace(cfg, seed)
    workload = build_workload(cfg)
    sc = sim_config(cfg, check_invariants)
    report, log = run_simulation(sc, trace, workload, seed)
    report.workload_id = workload_id(workload)
    if baseline and report.jobs_completed == report.jobs_submitted and report.jobs_submitted:
        ref, _ = run_simulation(sc, failure_free(trace), workload, seed)
        if ref.makespan > 0:
            report.makespan_overhead = report.makespan / ref.makespan - 1.0
    return RunResult(report, log, trace, seed)


# -- sweeps ------------------------------------------------------------------

def parse_seed_range(text: str) -> list[int]:
    if ".." in text:
        a, b = text.split("..", 1)
        lo, hi = int(a), int(b)
        if hi < lo:
            raise ValueError(f"empty seed range {text}")
        return list(range(lo, hi + 1))
    return [int(s) for s in text.split(",")]


def grid_points(grid: dict) -> list[dict]:
    if not grid or any(not values for values in grid.values()):
        raise ValueError("parameter grid is empty")
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def point_label(point: dict) -> str:
    def short(v):
        if v is True:
            return "on"
        if v is False:
            return "off"
        return str(v)
    return ",".join(f"{resolve_key(k).rsplit('.', 1)[-1]}={short(v)}" for k, v in point.items())


def _sweep_task(args):
    data, base_dir, point, seed = args
    cfg = ExperimentConfig(data, Path(base_dir)).with_overrides(point)
    result = run_once(cfg, seed, baseline=False)
    return point_label(point), seed, result.report.summary()


def sweep(cfg: ExperimentConfig, seeds: list[int], grid: dict, out_dir, workers: int = 1,
          progress=None) -> list[dict]:
    """Run every (grid point, seed) pair, skipping pairs already listed in the manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.jsonl"
    done: dict[tuple, dict] = {}
    if manifest.exists():
        for line in manifest.read_text().splitlines():
            if line.strip():
                row = json.loads(line)
                done[(row["point"], row["seed"])] = row["summary"]
    points = grid_points(grid)
    tasks = [(cfg.data, str(cfg.base_dir), p, s) for p in points for s in seeds
             if (point_label(p), s) not in done]
    with manifest.open("a") as fh:
        def record(label, seed, summary):
            done[(label, seed)] = summary
            fh.write(json.dumps({"point": label, "seed": seed, "summary": summary},
                                sort_keys=True) + "\n")
            fh.flush()
            if progress:
                progress(label, seed, summary)
        if workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(workers) as pool:
                for label, seed, summary in pool.map(_sweep_task, tasks):
                    record(label, seed, summary)
        else:
            for task in tasks:
                record(*_sweep_task(task))
    rows = []
    for p in points:
        label = point_label(p)
        rates = [done[(label, s)]["completion_rate"] for s in seeds]
        rows.append({
            "point": label,
            "runs": len(rates),
            "mean_completion_rate": round(statistics.fmean(rates), 6),
            "min_completion_rate": round(min(rates), 6),
            "max_completion_rate": round(max(rates), 6),
            "mean_restores": round(statistics.fmean(done[(label, s)]["restores"] for s in seeds), 6),
            "mean_continuity_losses": round(statistics.fmean(
                done[(label, s)]["continuity_losses"] for s in seeds), 6),
        })
    return rows


def write_table(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), delimiter="\t",
                                lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def format_table(rows: list[dict]) -> str:
    headers = list(rows[0])
    widths = {h: max(len(h), *(len(str(r[h])) for r in rows)) for h in headers}
    lines = ["  ".join(h.ljust(widths[h]) for h in headers).rstrip()]
    lines += ["  ".join(str(r[h]).ljust(widths[h]) for h in headers).rstrip() for r in rows]
    return "\n".join(lines) + "\n"


# -- Monte-Carlo continuity --------------------------------------------------

@dataclass
class ContinuityResult:
    runs: int
    survived: int
    degraded: int
    mean_receivers: float

    @property
    def survival_rate(self) -> float:
        return self.survived / self.runs if self.runs else 0.0


def continuity_experiment(runs: int = 1000, n_hosts: int = 30, p_low: float = 0.05,
                          p_high: float = 0.30, threshold: float = 0.05,
                          seed: int = 0) -> ContinuityResult:
    """Fraction of jobs that keep at least one snapshot copy when hosts fail independently.

    Each run draws a static failure probability per host, places one job's
    snapshot from a random sender through the normal filter/select path and
    then fails every receiver independently with its own probability.
    """
    rng = random.Random(seed)
    survived = degraded = receivers_total = 0
    hosts = [f"h{i:02d}" for i in range(n_hosts)]
    for _ in range(runs):
        probs = {h: rng.uniform(p_low, p_high) for h in hosts}
        sender = rng.choice(hosts)
        views = [HostView(h, 100.0 * (1.0 - p), p, storage_free=math.inf,
                          cloudlets=frozenset({"default"})) for h, p in probs.items()]
        ordered = filter_receivers(sender, {"default"}, views)
        decision = select_receivers(ordered, threshold)
        degraded += decision.degraded
        receivers_total += len(decision.receivers)
        if any(rng.random() >= probs[h] for h in decision.receivers):
            survived += 1
    return ContinuityResult(runs, survived, degraded, receivers_total / runs if runs else 0.0)
