"""Command-line entry point: ``srlopt <command> [options]``.

Value precedence is flag > environment (``SRLOPT_OUTPUT_DIR``, output
directory only) > config file > built-in default. Every output file carries
the config hash and seed, either inline (JSON) or in a ``.meta.json``
sidecar (CSV).

Exit codes: 0 success, 2 config or usage error, 3 numeric failure, 4 I/O.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import bench, io
from .config import InvalidConfig, RunConfig, config_hash, load_config
from .ellipsoid import DegenerateCloud, MaxIterExceeded, NotSPD, mvee_fit
from .kinematics import (MODES, DecisionVector, EmptyWorkspace, OutOfBounds, build_cane_model,
                         build_human_arm, build_srl_lower, build_srl_upper, reduced_workspace,
                         sample_workspace)
from .objectives import SRLProblem, estimate_reference_front, problem_from_config
from .solver import LengthMismatch

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
ENV_OUTPUT_DIR = "SRLOPT_OUTPUT_DIR"
# reported MSCFA solution, used when a command needs x and none is given
DEFAULT_X = (0.100, 0.403, 0.296, 0.204, 0.198)


class CLIError(Exception):
    def __init__(self, msg, code):
        super().__init__(msg)
        self.code = code


# --- config resolution ----------------------------------------------------------

def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.threads is not None:
        over["threads"] = args.threads
    out = args.output_dir or os.environ.get(ENV_OUTPUT_DIR)
    if out:
        over["output_dir"] = out
    if getattr(args, "algo", None):
        over["algorithm"] = args.algo
    if getattr(args, "n_runs", None) is not None:
        over["n_runs"] = args.n_runs
    if getattr(args, "timing", False):
        over["record_timing"] = True
    try:
        return dataclasses.replace(cfg, **over)
    except InvalidConfig:
        raise
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(str(exc)) from exc


def parse_x(text) -> np.ndarray:
    if text is None:
        return np.array(DEFAULT_X)
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise InvalidConfig(f"--x: {exc}") from exc
    if len(vals) != 5:
        raise InvalidConfig("--x needs 5 values: l1 l2 l3 l4 c")
    x = DecisionVector.from_array(vals)
    x.check_bounds()
    return x.as_array()


def _cache_dir(cfg: RunConfig) -> str:
    return os.path.join(cfg.output_dir, "cache")


def _out_path(cfg: RunConfig, explicit, default_name) -> str:
    return explicit or os.path.join(cfg.output_dir, default_name)


def _header(cfg: RunConfig, seed) -> dict:
    return {"config_hash": config_hash(cfg), "seed": seed}


# --- commands ---------------------------------------------------------------------

def cmd_workspace(cfg: RunConfig, mode: str, n: int | None, out=None, x=None,
                  fmt: str = "csv") -> str:
    """Sample a workspace cloud and write it as CSV or JSON."""
    n = cfg.sampling.n if n is None else n
    seed = cfg.seed
    if mode == "human_arm":
        cloud = sample_workspace(build_human_arm(cfg.body), n, seed, cfg.threads)
    elif mode == "cane":
        cloud = sample_workspace(build_cane_model(cfg.body), n, seed, cfg.threads)
    elif mode == "srl_upper":
        cloud = sample_workspace(build_srl_upper(x, cfg.body), n, seed, cfg.threads)
    else:
        cloud = reduced_workspace(build_srl_lower(x, cfg.body), cfg.body.ground_offset, n,
                                  seed, cfg.body, threads=cfg.threads)
    path = _out_path(cfg, out, f"workspace_{mode}_seed{seed}.{fmt}")
    if fmt == "json":
        data = {"mode": mode, "points": [[float(io._fmt(v)) for v in p] for p in cloud.points],
                **_header(cfg, seed)}
        io.write_json(path, data)
    else:
        io._atomic_write(path, io.cloud_to_csv(cloud.points))
        io.write_meta(path, config_hash(cfg), [seed])
    return path


def cmd_fit(cfg: RunConfig, cloud_file: str, out=None, tol: float | None = None) -> str:
    """Fit the MVEE of a cloud file and write the ellipsoid JSON."""
    try:
        pts = io.read_cloud(cloud_file)
    except (OSError, ValueError, KeyError) as exc:
        raise CLIError(f"cannot read {cloud_file}: {exc}", EXIT_IO) from exc
    tol = cfg.sampling.fit_tol if tol is None else tol
    ell, rep = mvee_fit(pts, tol)
    stem = os.path.splitext(os.path.basename(cloud_file))[0]
    path = _out_path(cfg, out, f"ellipsoid_{stem}.json")
    data = {"ellipsoid": ell.to_dict(), "volume": ell.volume, "tol": tol,
            "report": dataclasses.asdict(rep), "source": os.path.basename(cloud_file),
            "n_points": len(pts), **_header(cfg, _source_seed(cloud_file))}
    io.write_json(path, data)
    return path


def _source_seed(cloud_file):
    meta = f"{cloud_file}.meta.json"
    try:
        if cloud_file.endswith(".json"):
            return io.read_json(cloud_file).get("seed")
        if os.path.exists(meta):
            return io.read_json(meta)["seeds"][0]
    except (OSError, ValueError, KeyError, IndexError):
        pass
    return None


def cmd_eval(cfg: RunConfig, x, out=None) -> str:
    """Objective profile of one candidate at the reporting sample size.

    The reference front is the one the optimizer uses (n_opt samples), read
    from the shared cache, so reported Phi is comparable with traces.
    """
    s = cfg.sampling
    opt = SRLProblem(cfg.body, s.n_opt, s.seed, s.opt_fit_tol, threads=cfg.threads)
    front = estimate_reference_front(opt, s.front_budget, s.seed, cache_dir=_cache_dir(cfg))
    prob = SRLProblem(cfg.body, s.n, s.seed, s.fit_tol, front=front, memo=False)
    prof = prob.profile(x)
    path = _out_path(cfg, out, f"eval_seed{cfg.seed}.json")
    data = {"x": [float(v) for v in x], "total_length": float(sum(x[:4])),
            "n": s.n, "pf": front.pf.tolist(), **prof.to_dict(), **_header(cfg, cfg.seed)}
    io.write_json(path, data)
    return path


def cmd_optimize(cfg: RunConfig) -> list[str]:
    """One run of ``cfg.algorithm``: trace CSV plus a report JSON."""
    prob = problem_from_config(cfg, cache_dir=_cache_dir(cfg))
    report, traces = bench.repeat_runs(prob, cfg.algorithm, cfg.solver, 1, cfg.seed,
                                       cfg.record_timing, 1, config_hash(cfg))
    if report.failures:
        raise CLIError(report.failures[0]["error"], EXIT_NUMERIC)
    files = bench.emit_traces(traces, cfg.output_dir, config_hash(cfg))
    path = os.path.join(cfg.output_dir, f"report_{cfg.algorithm}_seed{cfg.seed}.json")
    io.write_json(path, {**report.to_dict(), "seed": cfg.seed})
    return files + [path]


def cmd_bench(cfg: RunConfig) -> tuple[list[str], int]:
    """``cfg.n_runs`` seeded runs; table CSV, report JSON and traces."""
    prob = problem_from_config(cfg, cache_dir=_cache_dir(cfg))
    h = config_hash(cfg)
    report, traces = bench.repeat_runs(prob, cfg.algorithm, cfg.solver, cfg.n_runs, cfg.seed,
                                       cfg.record_timing, cfg.threads, h)
    base = os.path.join(cfg.output_dir, f"bench_{cfg.algorithm}_seed{cfg.seed}")
    io._atomic_write(base + ".csv", bench.emit_table([report]))
    io.write_meta(base + ".csv", h, report.seeds)
    io.write_json(base + ".json", report.to_dict())
    files = bench.emit_traces(traces, base + "_traces", h)
    return [base + ".csv", base + ".json", *files], (EXIT_OK if not report.failures
                                                     else EXIT_NUMERIC)


# --- argument parsing -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--seed", type=int, help="run seed (overrides config)")
    common.add_argument("--threads", type=int, help="worker cap; outputs do not depend on it")
    common.add_argument("--output-dir", help=f"output directory (env {ENV_OUTPUT_DIR})")

    p = argparse.ArgumentParser(prog="srlopt", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    w = sub.add_parser("workspace", parents=[common], help="sample a workspace cloud")
    w.add_argument("--mode", choices=MODES, default="srl_upper")
    w.add_argument("--n", type=int, help="sample count (default sampling.n)")
    w.add_argument("--x", help="decision vector 'l1,l2,l3,l4,c' for the SRL modes")
    w.add_argument("--format", choices=("csv", "json"), default="csv")
    w.add_argument("--out", help="output file")

    f = sub.add_parser("fit", parents=[common], help="fit the MVEE of a cloud file")
    f.add_argument("cloud", help="CSV (x,y,z header) or JSON cloud")
    f.add_argument("--tol", type=float)
    f.add_argument("--out", help="output file")

    e = sub.add_parser("eval", parents=[common], help="objective profile of one candidate")
    e.add_argument("--x", help="decision vector 'l1,l2,l3,l4,c'")
    e.add_argument("--out", help="output file")

    for name, helptext in (("optimize", "single optimization run"),
                           ("bench", "seeded multi-run benchmark")):
        o = sub.add_parser(name, parents=[common], help=helptext)
        o.add_argument("--algo", choices=("mscfa", "fa", "random"))
        o.add_argument("--timing", action="store_true",
                       help="record wall times (outputs are then not reproducible)")
        if name == "bench":
            o.add_argument("--n-runs", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "workspace":
            x = parse_x(args.x)
            if args.n is not None and args.n < 1:
                raise InvalidConfig("--n must be >= 1")
            files = [cmd_workspace(cfg, args.mode, args.n, args.out, x, args.format)]
            code = EXIT_OK
        elif args.command == "fit":
            if args.tol is not None and args.tol <= 0:
                raise InvalidConfig("--tol must be positive")
            files, code = [cmd_fit(cfg, args.cloud, args.out, args.tol)], EXIT_OK
        elif args.command == "eval":
            files, code = [cmd_eval(cfg, parse_x(args.x), args.out)], EXIT_OK
        elif args.command == "optimize":
            files, code = cmd_optimize(cfg), EXIT_OK
        else:
            files, code = cmd_bench(cfg)
    except (InvalidConfig, OutOfBounds, LengthMismatch) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (DegenerateCloud, EmptyWorkspace, MaxIterExceeded, NotSPD,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for path in files:
        print(path)
    return code


if __name__ == "__main__":
    sys.exit(main())
