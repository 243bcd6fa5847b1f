"""Seeded multi-run harness: per-algorithm cost, convergence and timing statistics."""
from __future__ import annotations

import csv
import io as _io
import os
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import SolverParams
from .io import _fmt, trace_to_csv, write_meta, _atomic_write
from .solver import run_algorithm

TABLE_COLUMNS = (
    "algorithm", "max_iter", "pop", "best_cost_mean", "best_cost_sd", "best_solution",
    "total_length", "conv_iter_mean", "conv_iter_sd", "time_per_iter_mean",
    "time_per_iter_sd", "time_per_run_mean", "time_per_run_sd", "runs", "config_hash",
)


@dataclass
class BenchReport:
    algorithm: str
    runs: int
    seeds: list[int]
    max_iter: int
    pop: int
    best_cost_mean: float
    best_cost_sd: float
    best_cost: float
    best_solution: list[float]
    best_seed: int
    total_length: float
    conv_iter_mean: float | None
    conv_iter_sd: float | None
    converged_runs: int
    time_per_run_mean: float | None = None
    time_per_run_sd: float | None = None
    time_per_iter_mean: float | None = None
    time_per_iter_sd: float | None = None
    config_hash: str = ""
    failures: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _mean_sd(values):
    if not values:
        return None, None
    mean = statistics.fmean(values)
    sd = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, sd


def aggregate(algorithm: str, results, params: SolverParams, config_hash: str = "",
              failures=()) -> BenchReport:
    """Fold ``(seed, best, trace)`` triples into a report; run order does not
    matter."""
    results = sorted(results, key=lambda r: r[0])
    if not results:
        raise ValueError("no successful runs to aggregate")
    seeds = [s for s, _, _ in results]
    costs = [b.phi for _, b, _ in results]
    mean, sd = _mean_sd(costs)
    k = int(np.argmin(costs))  # lowest seed among ties
    best = results[k][1]
    convs = [t.conv_iter for _, _, t in results if t.conv_iter is not None]
    c_mean, c_sd = _mean_sd(convs)
    runs = [t.wall_time_total for _, _, t in results if t.wall_time_total is not None]
    per_iter = [t.wall_time_total / max(t.iterations, 1) for _, _, t in results
                if t.wall_time_total is not None]
    r_mean, r_sd = _mean_sd(runs)
    i_mean, i_sd = _mean_sd(per_iter)
    x = [float(v) for v in best.x]
    return BenchReport(
        algorithm=algorithm, runs=len(results), seeds=seeds, max_iter=params.max_iter,
        pop=params.pop, best_cost_mean=mean, best_cost_sd=sd, best_cost=costs[k],
        best_solution=x, best_seed=seeds[k], total_length=sum(x[:4]),
        conv_iter_mean=c_mean, conv_iter_sd=c_sd, converged_runs=len(convs),
        time_per_run_mean=r_mean, time_per_run_sd=r_sd, time_per_iter_mean=i_mean,
        time_per_iter_sd=i_sd, config_hash=config_hash,
        failures=sorted(failures, key=lambda f: f["seed"]))


def repeat_runs(problem, algorithm: str, params: SolverParams, n_runs: int, base_seed: int,
                record_timing: bool = False, workers: int = 1, config_hash: str = ""):
    """Run seeds base_seed .. base_seed + n_runs - 1.

    A run that raises is recorded in ``report.failures`` with its error and
    left out of the aggregates. Returns ``(report, traces)`` with traces in
    seed order.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    seeds = list(range(base_seed, base_seed + n_runs))

    def one(seed):
        try:
            best, trace = run_algorithm(problem, algorithm, params, seed, record_timing)
            return seed, best, trace, None
        except Exception as exc:  # recorded, aggregate continues
            return seed, None, None, f"{type(exc).__name__}: {exc}"

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(one, seeds))
    else:
        out = [one(s) for s in seeds]
    ok = [(s, b, t) for s, b, t, e in out if e is None]
    failures = [{"seed": s, "error": e} for s, _, _, e in out if e is not None]
    report = aggregate(algorithm, ok, params, config_hash, failures)
    return report, [t for _, _, t in ok]


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return _fmt(v)
    if isinstance(v, list):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def emit_table(reports) -> str:
    """CSV with one row per report, columns in TABLE_COLUMNS order."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    for r in reports:
        d = r.to_dict()
        w.writerow([_cell(d[c]) for c in TABLE_COLUMNS])
    return buf.getvalue()


def trace_filename(trace) -> str:
    return f"trace_{trace.algorithm}_seed{trace.seed}.csv"


def emit_traces(traces, path, config_hash: str = "") -> list[str]:
    """One CSV per trace in directory ``path``; returns the file paths."""
    os.makedirs(path, exist_ok=True)
    files = []
    for tr in traces:
        f = os.path.join(path, trace_filename(tr))
        _atomic_write(f, trace_to_csv(tr))
        write_meta(f, config_hash, [tr.seed])
        files.append(f)
    return files
