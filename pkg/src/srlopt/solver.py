"""Multi-subpopulation correction firefly algorithm (MSCFA) and baselines.

Every problem exposes ``dim``, ``lb``, ``ub`` and ``evaluate(X) -> (phi, F)``
where ``phi`` is the scalar cost per row and ``F`` the raw objective matrix
used for dominance checks.

Randomness: iteration t draws one ``(pop, dim)`` uniform matrix per purpose
from ``default_rng([seed, t, purpose])``; row i belongs to slot i whatever
the update order or the number of workers.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .config import SolverParams

# substream purposes
_MOVE, _REPLACE, _RANDOM = 0, 1, 2
SUBPOPS = ("H", "M", "L")


class LengthMismatch(ValueError):
    pass


@dataclass
class Individual:
    x: np.ndarray
    phi: float
    objectives: np.ndarray
    subpop: str = "H"
    dominated: bool = False


@dataclass
class RunTrace:
    """Per-iteration record; row 0 is the initial population."""

    algorithm: str
    seed: int
    best_phi_per_iter: list[float] = field(default_factory=list)
    best_x_per_iter: list[np.ndarray] = field(default_factory=list)
    wall_time_per_iter: list[float] | None = None
    conv_iter: int | None = None
    n_evals: int = 0
    wall_time_total: float | None = None

    @property
    def iterations(self) -> int:
        return len(self.best_phi_per_iter) - 1


# --- elementary operators -----------------------------------------------------

def attraction(r, I0: float = 1.0, gamma: float = 1.0, I_min: float = 0.2):
    """I(r) = I0 exp(-gamma r^2) + I_min."""
    return I0 * np.exp(-gamma * np.square(r)) + I_min


def repulsion(r, beta0: float = 1.0, eta: float = 10.0, beta_min: float = 0.01):
    """beta(r) = beta0 exp(-eta r^2) + beta_min."""
    return beta0 * np.exp(-eta * np.square(r)) + beta_min


def pair_distance(xi, xj) -> float:
    return float(np.linalg.norm(np.asarray(xj, dtype=float) - np.asarray(xi, dtype=float)))


def pareto_dominates(a, b) -> bool:
    """a is nowhere worse than b and strictly better somewhere."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise LengthMismatch(f"cannot compare shapes {a.shape} and {b.shape}")
    return bool(np.all(a <= b) and np.any(a < b))


def dominance_matrix(F: np.ndarray) -> np.ndarray:
    """dom[j, i] is True when row j dominates row i."""
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    return le & lt


def annealed_alpha(params: SolverParams, t: int) -> float:
    if params.max_iter <= 1:
        return params.alpha
    frac = t / (params.max_iter - 1)
    return params.alpha + (params.alpha_final - params.alpha) * frac


def _uniforms(seed: int, t: int, purpose: int, shape) -> np.ndarray:
    return np.random.default_rng([seed, t, purpose]).random(shape)


# --- population-level operators -----------------------------------------------

def init_population(params: SolverParams, lb, ub, seed: int) -> np.ndarray:
    """Latin-hypercube sample of ``params.pop`` points in the box."""
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    sampler = qmc.LatinHypercube(d=len(lb), seed=np.random.default_rng([seed]))
    return qmc.scale(sampler.random(params.pop), lb, ub)


@dataclass
class Replacement:
    X: np.ndarray
    phi: np.ndarray  # replaced slots carry their dominator's cost
    replaced: np.ndarray  # indices
    centers: np.ndarray  # eliminated positions, (k, dim)


def replace_dominated(X, phi, F, k_replace, lb, ub, seed: int, t: int) -> Replacement:
    """Move every dominated individual next to its best dominator.

    ``k_replace`` is the per-dimension width of the uniform offset. The old
    positions become repulsion centers for this iteration.
    """
    X = np.asarray(X, dtype=float)
    phi = np.asarray(phi, dtype=float)
    dom = dominance_matrix(np.asarray(F, dtype=float))
    dominated = np.flatnonzero(dom.any(axis=0))
    Xn = X.copy()
    phin = phi.copy()
    k = np.broadcast_to(np.asarray(k_replace, dtype=float), X.shape[1:])
    U = _uniforms(seed, t, _REPLACE, X.shape)
    for i in dominated:
        doms = np.flatnonzero(dom[:, i])
        j = doms[np.argmin(phi[doms])]  # first index among ties
        Xn[i] = np.clip(X[j] + k * (U[i] - 0.5), lb, ub)
        phin[i] = phi[j]
    return Replacement(Xn, phin, dominated, X[dominated].copy())


def partition(phi, best_phi: float | None = None):
    """Index arrays (H, M, L) by ascending |phi - phi_best|, tertile split,
    ties broken by index."""
    phi = np.asarray(phi, dtype=float)
    b = phi.min() if best_phi is None else best_phi
    order = np.argsort(np.abs(phi - b), kind="stable")
    return tuple(np.sort(part) for part in np.array_split(order, 3))


@dataclass
class StepResult:
    X: np.ndarray
    subpop: np.ndarray  # labels "H"/"M"/"L" per slot
    replaced: np.ndarray
    centers: np.ndarray


def _move(xi, params: SolverParams, attractor, center, eps):
    out = xi + eps
    if attractor is not None:
        r = pair_distance(xi, attractor)
        out = out + attraction(r, params.I0, params.gamma, params.I_min) * (attractor - xi)
    if center is not None:
        r = pair_distance(xi, center)
        out = out - repulsion(r, params.beta0, params.eta, params.beta_min) * (center - xi)
    return out


def step(X, phi, F, params: SolverParams, lb, ub, seed: int, t: int,
         global_best=None) -> StepResult:
    """One synchronous MSCFA update of the whole population.

    H members move towards the brightest H member, M members towards the
    brightest M member and away from the nearest eliminated position, L
    members only away from it. A member that is itself the brightest of its
    group is drawn to ``global_best`` instead. With ``use_partition`` off
    every member follows the H law; with ``use_replacement`` off nothing is
    eliminated.
    """
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    X = np.asarray(X, dtype=float)
    phi = np.asarray(phi, dtype=float)
    n, d = X.shape
    if params.use_replacement:
        rep = replace_dominated(X, phi, F, params.k_replace * (ub - lb), lb, ub, seed, t)
    else:
        rep = Replacement(X.copy(), phi.copy(), np.array([], dtype=int), np.empty((0, d)))
    Xr = rep.X
    if params.use_partition:
        # ranking uses the evaluated costs, before any replacement
        groups = partition(phi)
    else:
        groups = (np.arange(n), np.array([], dtype=int), np.array([], dtype=int))
    labels = np.empty(n, dtype="<U1")
    alpha = annealed_alpha(params, t)
    width = ub - lb
    Xn = np.empty_like(Xr)
    E = alpha * (_uniforms(seed, t, _MOVE, (n, d)) - 0.5) * width
    for name, idx in zip(SUBPOPS, groups):
        labels[idx] = name
        bright = idx[np.argmin(rep.phi[idx])] if len(idx) else -1
        for i in idx:
            eps = E[i]
            attractor = center = None
            if name != "L":
                if i != bright:
                    attractor = Xr[bright]
                elif global_best is not None:
                    attractor = np.asarray(global_best, dtype=float)
            if name != "H" and len(rep.centers):
                dist = np.linalg.norm(rep.centers - Xr[i], axis=1)
                center = rep.centers[int(np.argmin(dist))]
            Xn[i] = _move(Xr[i], params, attractor, center, eps)
    return StepResult(np.clip(Xn, lb, ub), labels, rep.replaced, rep.centers)


def convergence_iteration(best_phi, threshold: float, window: int) -> int | None:
    """First t with best_phi[t : t + window] all below ``threshold``."""
    v = np.asarray(best_phi, dtype=float) < threshold
    for t in range(len(v) - window + 1):
        if v[t:t + window].all():
            return t
    return None


# --- drivers -------------------------------------------------------------------

class _Archive:
    def __init__(self):
        self.x = None
        self.phi = math.inf
        self.objectives = None

    def update(self, X, phi, F):
        i = int(np.argmin(phi))
        if phi[i] < self.phi:
            self.x, self.phi, self.objectives = X[i].copy(), float(phi[i]), F[i].copy()


def _record(trace: RunTrace, archive: _Archive, t0: float | None):
    trace.best_phi_per_iter.append(archive.phi)
    trace.best_x_per_iter.append(archive.x.copy())
    if trace.wall_time_per_iter is not None:
        now = time.perf_counter()
        trace.wall_time_per_iter.append(now - t0[0])
        t0[0] = now


def _firefly(problem, params: SolverParams, seed: int, name: str, record_timing: bool):
    lb, ub = np.asarray(problem.lb, dtype=float), np.asarray(problem.ub, dtype=float)
    trace = RunTrace(name, seed, wall_time_per_iter=[] if record_timing else None)
    start = time.perf_counter()
    clock = [start]
    X = init_population(params, lb, ub, seed)
    phi, F = problem.evaluate(X)
    trace.n_evals += len(X)
    archive = _Archive()
    archive.update(X, phi, F)
    _record(trace, archive, clock)
    labels = np.full(len(X), "H")
    for t in range(params.max_iter):
        res = step(X, phi, F, params, lb, ub, seed, t, archive.x)
        X, labels = res.X, res.subpop
        phi, F = problem.evaluate(X)
        trace.n_evals += len(X)
        archive.update(X, phi, F)
        _record(trace, archive, clock)
    if record_timing:
        trace.wall_time_total = time.perf_counter() - start
    trace.conv_iter = convergence_iteration(trace.best_phi_per_iter, params.conv_threshold,
                                            params.conv_window)
    best = Individual(archive.x, archive.phi, archive.objectives)
    return best, trace, (X, phi, F, labels)


def run(problem, params: SolverParams, seed: int, record_timing: bool = False):
    """MSCFA. Returns the archived best Individual and the RunTrace."""
    best, trace, _ = _firefly(problem, params, seed, "mscfa", record_timing)
    return best, trace


def plain_fa_params(params: SolverParams) -> SolverParams:
    from dataclasses import replace
    return replace(params, use_partition=False, use_replacement=False)


def run_baseline_fa(problem, params: SolverParams, seed: int, record_timing: bool = False):
    """Plain firefly: every member follows the H law towards the best."""
    best, trace, _ = _firefly(problem, plain_fa_params(params), seed, "fa", record_timing)
    return best, trace


def run_random_search(problem, budget: int, seed: int, chunk: int = 81,
                      conv_threshold: float = 0.2, conv_window: int = 10,
                      record_timing: bool = False):
    """Uniform sampling of the box in chunks; one trace row per chunk."""
    if budget < 1 or chunk < 1:
        raise ValueError("budget and chunk must be >= 1")
    lb, ub = np.asarray(problem.lb, dtype=float), np.asarray(problem.ub, dtype=float)
    trace = RunTrace("random", seed, wall_time_per_iter=[] if record_timing else None)
    start = time.perf_counter()
    clock = [start]
    archive = _Archive()
    t = 0
    while trace.n_evals < budget:
        k = min(chunk, budget - trace.n_evals)
        X = lb + (ub - lb) * _uniforms(seed, t, _RANDOM, (k, len(lb)))
        phi, F = problem.evaluate(X)
        trace.n_evals += k
        archive.update(X, phi, F)
        _record(trace, archive, clock)
        t += 1
    if record_timing:
        trace.wall_time_total = time.perf_counter() - start
    trace.conv_iter = convergence_iteration(trace.best_phi_per_iter, conv_threshold, conv_window)
    return Individual(archive.x, archive.phi, archive.objectives), trace


def run_algorithm(problem, algorithm: str, params: SolverParams, seed: int,
                  record_timing: bool = False):
    """Dispatch by name; random search gets the firefly evaluation budget."""
    if algorithm == "mscfa":
        return run(problem, params, seed, record_timing)
    if algorithm == "fa":
        return run_baseline_fa(problem, params, seed, record_timing)
    if algorithm == "random":
        return run_random_search(problem, params.pop * (params.max_iter + 1), seed, params.pop,
                                 params.conv_threshold, params.conv_window, record_timing)
    raise ValueError(f"unknown algorithm {algorithm!r}")


# --- synthetic validation problem ---------------------------------------------

class SyntheticBiobjective:
    """f1 = |x|^2, f2 = |x - 2 e1|^2 on [-2, 4]^dim.

    The Pareto set is the segment from 0 to 2 e1 and the front is
    (t^2, (t - 2)^2) for t in [0, 2]. The cost is the I_GD of the
    per-objective gap to the nearest front point, computed exactly.
    """

    def __init__(self, dim: int = 5, lower: float = -2.0, upper: float = 4.0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.lb = np.full(dim, lower)
        self.ub = np.full(dim, upper)

    def objectives(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        s = np.sum(X * X, axis=1)
        return np.c_[s, s - 4.0 * X[:, 0] + 4.0]

    @staticmethod
    def nearest_front_point(f) -> np.ndarray:
        """Front points (t^2, (t-2)^2) closest to rows of ``f`` in objective
        space; a single 2-vector gives a single point."""
        f = np.asarray(f, dtype=float)
        F = np.atleast_2d(f)
        k = len(F)
        # stationary points of |f - p(t)|^2 solve
        # t^3 - 3 t^2 + (6 - (f1 + f2) / 2) t + (f2 - 4) = 0
        comp = np.zeros((k, 3, 3))
        comp[:, 0, 0] = 3.0
        comp[:, 0, 1] = -(6.0 - 0.5 * (F[:, 0] + F[:, 1]))
        comp[:, 0, 2] = -(F[:, 1] - 4.0)
        comp[:, 1, 0] = 1.0
        comp[:, 2, 1] = 1.0
        roots = np.linalg.eigvals(comp)
        real = np.abs(roots.imag) < 1e-9
        ts = np.where(real, np.clip(roots.real, 0.0, 2.0), 0.0)
        ts = np.concatenate([ts, np.zeros((k, 1)), np.full((k, 1), 2.0)], axis=1)
        P = np.stack([ts * ts, (ts - 2.0) ** 2], axis=2)
        best = np.argmin(np.sum((P - F[:, None, :]) ** 2, axis=2), axis=1)
        out = P[np.arange(k), best]
        return out[0] if f.ndim == 1 else out

    def distance(self, f) -> np.ndarray:
        return np.abs(np.asarray(f, dtype=float) - self.nearest_front_point(f))

    def evaluate(self, X):
        F = self.objectives(X)
        D = self.distance(F)
        phi = np.sqrt(np.sum(D * D, axis=1)) / D.shape[1]
        return phi, F
