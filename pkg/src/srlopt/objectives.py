"""Sub-objectives, the distance vector against a reference front and the
I_GD scalarization.

Objective order everywhere: upper-mode similarity (cd, smad, obl, vol),
lower-mode similarity (same four), STS force indicator, relative mass,
moment of inertia.
"""
from __future__ import annotations

import functools
import json
import os
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .config import LB, UB, BodyParams, RunConfig, stable_hash
from .ellipsoid import (Ellipsoid, center_distance, fit_planar, lift_planar,
                        major_axis_distance, mvee_fit, oblateness_similarity, volume_ratio)
from ._planar_kernel import contact_mask, sts_forces
from .kinematics import (DecisionVector, EmptyWorkspace, _sagittal_frame, _shank,
                         build_cane_model, build_human_arm, fk_positions,
                         sample_angles, sample_workspace, srl_chain)

BIG = 1e12
N_OBJECTIVES = 11
OBJECTIVE_NAMES = ("cd_u", "smad_u", "obl_u", "vol_u", "cd_l", "smad_l", "obl_l", "vol_l",
                   "f_sts", "rel_mass", "inertia")
# joint-2 and joint-3 sines below this count as a stretched/folded knee
# acos near 1 loses half the digits, so a stretched knee reads as |psi| ~ 1e-8
SINGULAR_TOL = 1e-6
_MEMO_SIZE = 4096


@dataclass(frozen=True)
class ObjectiveProfile:
    upper: tuple[float, float, float, float]
    lower: tuple[float, float, float, float]
    f5: float
    f6: float
    f7: float
    D: np.ndarray
    phi: float
    flags: tuple[str, ...] = ()

    @property
    def values(self) -> np.ndarray:
        return np.array([*self.upper, *self.lower, self.f5, self.f6, self.f7])

    def to_dict(self) -> dict:
        return {
            "objectives": dict(zip(OBJECTIVE_NAMES, self.values.tolist())),
            "D": self.D.tolist(),
            "phi": self.phi,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class ReferenceFront:
    pf: np.ndarray
    provenance: str = "user_supplied"  # or "estimated"
    estimation_budget: int | None = None
    seed: int | None = None
    config_hash: str | None = None

    def __post_init__(self):
        pf = np.asarray(self.pf, dtype=float).reshape(-1)
        if pf.shape != (N_OBJECTIVES,) or not np.all(np.isfinite(pf)):
            raise ValueError("reference front must be a finite 11-vector")
        if self.provenance not in ("user_supplied", "estimated"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "pf", pf)

    def to_dict(self) -> dict:
        return {"pf": self.pf.tolist(), "provenance": self.provenance,
                "estimation_budget": self.estimation_budget, "seed": self.seed,
                "config_hash": self.config_hash}

    @classmethod
    def from_dict(cls, data: dict) -> ReferenceFront:
        return cls(np.array(data["pf"], dtype=float), data.get("provenance", "user_supplied"),
                   data.get("estimation_budget"), data.get("seed"), data.get("config_hash"))


# --- scalar objectives --------------------------------------------------------

def _lengths(x) -> np.ndarray:
    if isinstance(x, DecisionVector):
        return x.lengths
    return np.asarray(x, dtype=float)[:4]


def link_masses(lengths, rho_lin: float) -> np.ndarray:
    """Tube mass of each link, kg."""
    return rho_lin * np.asarray(lengths, dtype=float)


def relative_mass(x, cfg: BodyParams) -> float:
    """rho * |sum(l) - L0|: tube mass beyond (or short of) a leg's length."""
    return float(cfg.rho_lin * abs(_lengths(x).sum() - cfg.L0))


def moment_of_inertia(x, cfg: BodyParams) -> float:
    """Point-mass inertia of the modules about joint 1, links neglected.

    Module i+1 sits at distance r_i = l_1 + ... + l_i from the first joint.
    """
    r = np.cumsum(_lengths(x))
    return float(np.dot(cfg.module_masses, r * r))


def sts_poses(cfg: BodyParams) -> np.ndarray:
    """(n_poses, 2) mount positions (forward, height), sitting to standing."""
    s = np.linspace(0.0, 1.0, cfg.sts.n_poses)[:, None]
    a = np.asarray(cfg.sts.sit_mount, dtype=float)
    b = np.asarray(cfg.sts.stand_mount, dtype=float)
    return a + s * (b - a)


@dataclass(frozen=True)
class STSDetail:
    force: float
    pose_forces: np.ndarray
    singular_poses: tuple[int, ...]


def sts_support_force(x, cfg: BodyParams, detail: bool = False):
    """Largest vertical tip force the support chain holds at every STS pose.

    The tip is pinned on the floor at forward offset ``c`` from the feet and
    the mount follows the pose set of ``cfg.sts``. A vertical force F on the
    tip loads joint j with F times the horizontal distance from the joint to
    the tip. Joint 1 is vertical and carries no load; the locked joint 4
    still has to hold its share. Per pose the best IK branch within the
    joint limits is used; unreachable poses give zero.

    Returns F_H in newtons, or an :class:`STSDetail` when ``detail`` is set.
    """
    x = x if isinstance(x, DecisionVector) else DecisionVector.from_array(x)
    l1, l2, l3, l4 = (float(v) for v in x.lengths)
    lay = cfg.layout
    _sagittal_frame(cfg)  # validates the planar layout
    b, delta = _shank(l3, l4, lay.lower_locked_angles[1])
    mounts = sts_poses(cfg)
    forces, skipped = sts_forces(
        mounts[:, 0].copy(), mounts[:, 1] - l1, float(x.c), l2, l3, b, delta,
        np.asarray(cfg.torque_limits[1:], dtype=float),
        np.asarray(lay.joint_limits[1], dtype=float),
        np.asarray(lay.joint_limits[2], dtype=float), SINGULAR_TOL)
    # poses reachable only through a stretched or folded knee are skipped
    F = float(forces[~skipped].min()) if not skipped.all() else 0.0
    if detail:
        return STSDetail(F, forces, tuple(np.flatnonzero(skipped).tolist()))
    return F


def f5_from_force(force: float, kappa: float) -> float:
    return BIG if force <= 0.0 else kappa / force


def f5(x, cfg: BodyParams) -> float:
    """kappa / F_H; BIG when the chain cannot hold any force."""
    return f5_from_force(sts_support_force(x, cfg), cfg.kappa)


# --- distance vector and I_GD -------------------------------------------------

def distance_vector(values, pf) -> np.ndarray:
    """Per-objective distance to the reference front, clamped at zero."""
    values = np.asarray(getattr(values, "values", values), dtype=float)
    pf = np.asarray(getattr(pf, "pf", pf), dtype=float)
    return np.maximum(values - pf, 0.0)


def igd(D, p: float = 2.0) -> float:
    """(1/|D|) * ||D||_p."""
    D = np.abs(np.asarray(D, dtype=float))
    if p < 1:
        raise ValueError("p must be >= 1")
    m = D.max()
    if m == 0.0:
        return 0.0
    # scaled so tiny components do not underflow to a zero norm
    return float(m * np.sum((D / m) ** p) ** (1.0 / p) / len(D))


# --- workspace similarity -----------------------------------------------------

def similarity(e_ref: Ellipsoid, e: Ellipsoid, obl_eps: float) -> tuple[float, float, float, float]:
    return (center_distance(e_ref, e), major_axis_distance(e_ref, e),
            oblateness_similarity(e_ref, e, obl_eps), volume_ratio(e_ref, e))


@functools.lru_cache(maxsize=32)
def reference_ellipsoids(cfg: BodyParams, n: int, seed: int, tol: float
                         ) -> tuple[Ellipsoid, Ellipsoid]:
    """MVEEs of the human-arm workspace and of the cane-tip arc.

    The cane arc is fitted in the sagittal plane, like the support mode.
    """
    arm = sample_workspace(build_human_arm(cfg), n, seed)
    e_arm, _ = mvee_fit(arm, tol)
    cane = sample_workspace(build_cane_model(cfg), n, seed)
    e_cane, _ = fit_planar(cane, _plane_normal(cfg), cfg.min_thickness, tol)
    return e_arm, e_cane


def _plane_normal(cfg: BodyParams) -> np.ndarray:
    fwd, down = _sagittal_frame(cfg)
    return np.cross(down, fwd)


def _link_basis(cfg: BodyParams, mode: str, angles: np.ndarray) -> np.ndarray:
    # tool position is linear in the link lengths: p = mount + sum_k l_k v_k
    mount = np.asarray(cfg.layout.mount, dtype=float)
    cols = []
    for k in range(4):
        e = np.zeros(4)
        e[k] = 1.0
        cols.append(fk_positions(srl_chain(e, cfg, mode), angles) - mount)
    return np.stack(cols, axis=2)  # (n, 3, 4)


class SRLProblem:
    """Candidate evaluator with common random numbers.

    One joint-angle sample per mode is drawn once; each candidate's cloud is
    ``mount + basis @ lengths``, which equals sampling its own chain with the
    same seed.
    """

    dim = 5

    def __init__(self, cfg: BodyParams, n: int = 2000, seed: int = 0,
                 fit_tol: float = 1e-5, front: ReferenceFront | None = None,
                 threads: int = 1, memo: bool = True):
        self.cfg = cfg
        self.n = int(n)
        self.seed = int(seed)
        self.fit_tol = float(fit_tol)
        self.front = front
        self.threads = int(threads)
        self.lb = np.array(LB, dtype=float)
        self.ub = np.array(UB, dtype=float)
        self._memo: OrderedDict | None = OrderedDict() if memo else None
        self._mount = np.asarray(cfg.layout.mount, dtype=float)
        unit = np.ones(4)
        up = srl_chain(unit, cfg, "srl_upper")
        lo = srl_chain(unit, cfg, "srl_lower")
        fwd, down = _sagittal_frame(cfg)
        # in-plane frame of the support mode: forward and up
        self._plane = np.vstack([fwd, -down])
        self._normal = np.cross(self._plane[0], self._plane[1])
        basis = _link_basis(cfg, "srl_upper", sample_angles(up, self.n, self.seed))
        self._basis_upper = np.ascontiguousarray(basis.transpose(2, 0, 1))  # (4, n, 3)
        basis = _link_basis(cfg, "srl_lower", sample_angles(lo, self.n, self.seed))
        self._basis_lower = np.ascontiguousarray(
            np.einsum("nck,pc->knp", basis, self._plane))  # (4, n, 2)
        self._lim2 = np.asarray(cfg.layout.joint_limits[1], dtype=float)
        self._lim3 = np.asarray(cfg.layout.joint_limits[2], dtype=float)

    @functools.cached_property
    def references(self) -> tuple[Ellipsoid, Ellipsoid]:
        return reference_ellipsoids(self.cfg, self.n, self.seed, self.fit_tol)

    def with_front(self, front: ReferenceFront) -> SRLProblem:
        other = object.__new__(SRLProblem)
        other.__dict__.update(self.__dict__)
        other.front = front
        other._memo = OrderedDict() if self._memo is not None else None
        return other

    # clouds --------------------------------------------------------------
    def upper_cloud(self, x) -> np.ndarray:
        return self._mount + np.tensordot(_lengths(x), self._basis_upper, 1)

    def lower_plane_points(self, x, reduced: bool = True) -> np.ndarray:
        """Support-mode samples as (forward, height) relative to the mount."""
        l = _lengths(x)
        pts = np.tensordot(l, self._basis_lower, 1)
        if not reduced:
            return pts
        # the hip sits on the mount's vertical, so pts[:, 0] is the tip's
        # forward offset from the hip
        b, delta = _shank(l[2], l[3], self.cfg.layout.lower_locked_angles[1])
        g = self.cfg.ground_offset
        keep = contact_mask(np.ascontiguousarray(pts[:, 0]), float(l[1]), b, delta,
                            g - float(l[0]), self._lim2, self._lim3)
        keep &= pts[:, 1] >= -g - 1e-12
        if not keep.any():
            raise EmptyWorkspace("no sample survives the ground-contact filter")
        return pts[keep]

    def lower_cloud(self, x, reduced: bool = True) -> np.ndarray:
        return self._mount + self.lower_plane_points(x, reduced) @ self._plane

    # objectives ------------------------------------------------------------
    def fit_upper(self, x) -> Ellipsoid:
        return mvee_fit(self.upper_cloud(x), self.fit_tol)[0]

    def fit_lower(self, x) -> Ellipsoid:
        ell2 = mvee_fit(self.lower_plane_points(x), self.fit_tol)[0]
        return lift_planar(ell2, self._mount, self._plane, self.cfg.min_thickness)

    def similarity_block(self, x, mode: str, reference: Ellipsoid | None = None):
        if mode == "upper":
            ref = reference if reference is not None else self.references[0]
            return similarity(ref, self.fit_upper(x), self.cfg.obl_eps)
        if mode == "lower":
            ref = reference if reference is not None else self.references[1]
            return similarity(ref, self.fit_lower(x), self.cfg.obl_eps)
        raise ValueError(f"mode must be 'upper' or 'lower', got {mode!r}")

    def objectives(self, x) -> tuple[np.ndarray, tuple[str, ...]]:
        """Raw 11-vector and degeneracy flags for one candidate.

        An empty support workspace scores BIG on the four lower-mode terms.
        """
        x = np.asarray(getattr(x, "as_array", lambda: x)(), dtype=float)
        flags = []
        up = self.similarity_block(x, "upper")
        try:
            low = self.similarity_block(x, "lower")
        except EmptyWorkspace:
            low = (BIG, BIG, BIG, BIG)
            flags.append("empty_lower_workspace")
        sts = sts_support_force(x, self.cfg, detail=True)
        force = sts.force
        if sts.singular_poses:
            flags.append("singular_pose")
        if force <= 0.0:
            flags.append("no_support_force")
        vals = np.array([*up, *low, f5_from_force(force, self.cfg.kappa),
                         relative_mass(x, self.cfg), moment_of_inertia(x, self.cfg)])
        return vals, tuple(flags)

    def profile(self, x) -> ObjectiveProfile:
        vals, flags = self.objectives(x)
        pf = self.front.pf if self.front is not None else np.zeros(N_OBJECTIVES)
        D = distance_vector(vals, pf)
        return ObjectiveProfile(tuple(vals[:4]), tuple(vals[4:8]), float(vals[8]),
                                float(vals[9]), float(vals[10]), D, igd(D), flags)

    # solver interface ------------------------------------------------------
    def _values(self, x: np.ndarray) -> np.ndarray:
        if self._memo is None:
            return self.objectives(x)[0]
        key = x.tobytes()
        hit = self._memo.get(key)
        if hit is None:
            hit = self.objectives(x)[0]
            self._memo[key] = hit
            if len(self._memo) > _MEMO_SIZE:
                self._memo.popitem(last=False)
        return hit

    def evaluate(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Rows of candidates to (phi, raw objective matrix)."""
        if self.front is None:
            raise RuntimeError("attach a reference front before evaluating phi")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.threads > 1 and len(X) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                F = np.array(list(pool.map(self._values, X)))
        else:
            F = np.array([self._values(x) for x in X])
        D = distance_vector(F, self.front.pf)
        phi = np.array([igd(d) for d in D])
        return phi, F


@functools.lru_cache(maxsize=8)
def _cached_problem(cfg: BodyParams, n: int, seed: int, fit_tol: float) -> SRLProblem:
    return SRLProblem(cfg, n, seed, fit_tol, memo=False)


def eval_similarity_block(x, mode: str, cfg: BodyParams, seed: int = 0, n: int = 10000,
                          tol: float = 1e-7, reference: Ellipsoid | None = None):
    """[cd, smad, obl, vol] of the SRL workspace in ``mode`` against its
    reference (human arm for "upper", cane for "lower").

    Raises EmptyWorkspace when no lower-mode sample survives the floor filter.
    """
    DecisionVector.from_array(np.asarray(getattr(x, "as_array", lambda: x)())).check_bounds()
    return _cached_problem(cfg, n, seed, tol).similarity_block(x, mode, reference)


# --- reference front ----------------------------------------------------------

def front_candidates(budget: int, seed: int) -> np.ndarray:
    """Scrambled Halton points in the decision box; prefixes are nested."""
    pts = qmc.Halton(d=5, scramble=True, seed=seed).random(budget)
    return qmc.scale(pts, LB, UB)


def estimate_reference_front(problem: SRLProblem, budget: int, seed: int,
                             candidates=None, cache_dir=None,
                             config_key: str | None = None) -> ReferenceFront:
    """Component-wise utopia point over a space-filling sample.

    With ``cache_dir`` the result is stored as JSON under a key that covers
    the body config, sampling and budget, and reused on later calls.
    """
    if candidates is None:
        if budget < 1:
            raise ValueError("budget must be >= 1")
        candidates = front_candidates(budget, seed)
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    key = config_key or stable_hash({
        "body": _body_dict(problem.cfg), "n": problem.n, "sample_seed": problem.seed,
        "fit_tol": problem.fit_tol, "budget": len(candidates), "seed": seed,
        "candidates": stable_hash({"x": candidates.round(12).tolist()}),
    })
    path = os.path.join(cache_dir, f"front_{key}.json") if cache_dir else None
    if path and os.path.exists(path):
        with open(path) as fh:
            return ReferenceFront.from_dict(json.load(fh))
    F = np.array([problem.objectives(x)[0] for x in candidates])
    front = ReferenceFront(F.min(axis=0), "estimated", len(candidates), seed, key)
    if path:
        os.makedirs(cache_dir, exist_ok=True)
        tmp = path + ".tmp"
        with open(tmp, "w") as fh:
            json.dump(front.to_dict(), fh, indent=2, sort_keys=True)
        os.replace(tmp, path)
    return front


def _body_dict(cfg: BodyParams) -> dict:
    from .config import config_to_dict
    return config_to_dict(cfg)


def problem_from_config(cfg: RunConfig, cache_dir=None, n: int | None = None) -> SRLProblem:
    """Optimizer-side problem with its reference front attached."""
    s = cfg.sampling
    prob = SRLProblem(cfg.body, n or s.n_opt, s.seed, s.opt_fit_tol, threads=cfg.threads)
    front = estimate_reference_front(prob, s.front_budget, s.seed, cache_dir=cache_dir)
    return prob.with_front(front)
