"""File formats: point clouds, ellipsoids, traces, profiles and reports.

CSV files start with their header row; the (config hash, seed) pair of a
CSV lives in a ``<file>.meta.json`` sidecar. JSON is written with sorted
keys so identical inputs give identical bytes.
"""
from __future__ import annotations

import csv
import io as _io
import json
import os

import numpy as np

from .kinematics import PointCloud

TRACE_HEADER = ("iter", "best_phi", "wall_ms", "l1", "l2", "l3", "l4", "c")


def _fmt(v: float) -> str:
    return format(float(v), ".9g")


def _atomic_write(path, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def dumps_json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, data) -> None:
    _atomic_write(path, dumps_json(data))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_meta(path, config_hash: str, seeds) -> None:
    write_json(f"{path}.meta.json", {"config_hash": config_hash, "seeds": list(seeds)})


# --- point clouds ---------------------------------------------------------------

def cloud_to_csv(points) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("x", "y", "z"))
    for p in np.asarray(points, dtype=float):
        w.writerow([_fmt(v) for v in p])
    return buf.getvalue()


def write_cloud_csv(path, cloud: PointCloud) -> None:
    _atomic_write(path, cloud_to_csv(cloud.points))


def write_cloud_json(path, cloud: PointCloud) -> None:
    write_json(path, {"mode": cloud.mode_tag, "seed": cloud.sample_seed,
                      "points": [[float(_fmt(v)) for v in p] for p in cloud.points]})


def read_cloud(path) -> np.ndarray:
    """Points from either format, chosen by extension (``.json`` or CSV)."""
    if str(path).endswith(".json"):
        data = read_json(path)
        pts = np.asarray(data["points"], dtype=float)
    else:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or [h.strip() for h in rows[0]] != ["x", "y", "z"]:
            raise ValueError(f"{path}: expected an x,y,z header")
        pts = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    return pts.reshape(-1, 3) if pts.size else np.empty((0, 3))


# --- traces ---------------------------------------------------------------------

def trace_to_csv(trace) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    dim = len(trace.best_x_per_iter[0]) if trace.best_x_per_iter else 5
    header = list(TRACE_HEADER) if dim == 5 else ["iter", "best_phi", "wall_ms"] + [
        f"x{i + 1}" for i in range(dim)]
    w.writerow(header)
    walls = trace.wall_time_per_iter
    for t, (phi, x) in enumerate(zip(trace.best_phi_per_iter, trace.best_x_per_iter)):
        wall = "" if walls is None else _fmt(1e3 * walls[t])
        w.writerow([t, _fmt(phi), wall, *[_fmt(v) for v in x]])
    return buf.getvalue()


def read_trace_csv(path) -> dict:
    """Columns of a trace file; ``wall_ms`` entries are None when absent."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = {"iter": [int(r["iter"]) for r in rows],
           "best_phi": [float(r["best_phi"]) for r in rows],
           "wall_ms": [float(r["wall_ms"]) if r["wall_ms"] else None for r in rows]}
    xcols = [k for k in (rows[0].keys() if rows else []) if k not in ("iter", "best_phi", "wall_ms")]
    out["x"] = [[float(r[k]) for k in xcols] for r in rows]
    return out


# --- objective profiles ---------------------------------------------------------

def profiles_to_csv(xs, profiles) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["l1", "l2", "l3", "l4", "c"] + [f"D{k + 1}" for k in range(11)] + ["phi"])
    for x, p in zip(xs, profiles):
        w.writerow([_fmt(v) for v in x] + [_fmt(v) for v in p.D] + [_fmt(p.phi)])
    return buf.getvalue()
