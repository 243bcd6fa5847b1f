"""Serial-chain models, product-of-exponentials kinematics and Monte Carlo
workspace sampling."""
from __future__ import annotations

import functools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._planar_kernel import contact_mask
from .config import LB, UB, BodyParams, InvalidConfig

MODES = ("srl_upper", "srl_lower", "human_arm", "cane")

# samples per RNG substream; fixed so clouds do not depend on worker count
SAMPLE_BLOCK = 1024


class OutOfBounds(ValueError):
    pass


class AngleCountMismatch(ValueError):
    pass


class EmptyWorkspace(RuntimeError):
    pass


def hat(w) -> np.ndarray:
    """Skew-symmetric matrix with ``hat(w) @ v == cross(w, v)``."""
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


@dataclass(frozen=True)
class Pose:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-9) or abs(np.linalg.det(R) - 1) > 1e-9:
            raise ValueError("rotation must be orthonormal with det +1")
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> Pose:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, t) -> Pose:
        return cls(np.eye(3), t)

    @property
    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def __matmul__(self, other: Pose) -> Pose:
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    def apply(self, points) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation


@dataclass(frozen=True)
class Twist:
    """Revolute joint twist: unit axis ``omega`` through ``point``."""

    omega: np.ndarray
    point: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float).reshape(3)
        q = np.asarray(self.point, dtype=float).reshape(3)
        if abs(np.linalg.norm(w) - 1.0) > 1e-9:
            raise ValueError(f"twist axis must be a unit vector, got |w|={np.linalg.norm(w)}")
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "point", q)

    @property
    def v(self) -> np.ndarray:
        return -np.cross(self.omega, self.point)


def exp_twist(t: Twist, theta: float) -> Pose:
    """Rigid motion of rotating by ``theta`` about the twist axis."""
    w, v = t.omega, t.v
    W = hat(w)
    R = np.eye(3) + math.sin(theta) * W + (1.0 - math.cos(theta)) * (W @ W)
    # revolute twist: w . v = 0, so the pitch term vanishes
    p = (np.eye(3) - R) @ np.cross(w, v)
    return Pose(R, p)


@dataclass(frozen=True)
class JointSpec:
    twist: Twist
    limits: tuple[float, float]
    locked: bool = False
    locked_angle: float = 0.0

    def __post_init__(self):
        lo, hi = self.limits
        if lo > hi:
            raise ValueError(f"joint limits reversed: {self.limits}")


@dataclass(frozen=True)
class ChainModel:
    joints: tuple[JointSpec, ...]
    tool_zero: Pose
    mode: str = "srl_upper"
    link_lengths: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if len(self.joints) < 1:
            raise ValueError("a chain needs at least one joint")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        object.__setattr__(self, "joints", tuple(self.joints))

    @property
    def n_free(self) -> int:
        return sum(not j.locked for j in self.joints)

    @property
    def reach(self) -> float:
        """Upper bound on the distance between base and tool point."""
        return float(sum(self.link_lengths))


def _effective_angles(chain: ChainModel, angles: np.ndarray) -> np.ndarray:
    angles = np.array(angles, dtype=float)
    for i, j in enumerate(chain.joints):
        if j.locked:
            angles[..., i] = j.locked_angle
    return angles


def forward_kinematics(chain: ChainModel, angles) -> Pose:
    """Tool pose for one joint configuration; locked joints ignore ``angles``."""
    angles = np.asarray(angles, dtype=float)
    if angles.shape != (len(chain.joints),):
        raise AngleCountMismatch(
            f"expected {len(chain.joints)} angles, got {angles.shape}")
    angles = _effective_angles(chain, angles)
    g = Pose.identity()
    for j, th in zip(chain.joints, angles):
        g = g @ exp_twist(j.twist, th)
    return g @ chain.tool_zero


def fk_positions(chain: ChainModel, angles: np.ndarray) -> np.ndarray:
    """Vectorised tool positions for an ``(n, k)`` array of joint angles."""
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    if angles.shape[1] != len(chain.joints):
        raise AngleCountMismatch(
            f"expected {len(chain.joints)} angle columns, got {angles.shape[1]}")
    angles = _effective_angles(chain, angles)
    n = angles.shape[0]
    R_acc = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    t_acc = np.zeros((n, 3))
    for i, j in enumerate(chain.joints):
        W = hat(j.twist.omega)
        s = np.sin(angles[:, i])[:, None, None]
        c = np.cos(angles[:, i])[:, None, None]
        R = np.eye(3) + s * W + (1.0 - c) * (W @ W)
        t = j.twist.point - R @ j.twist.point
        t_acc = np.einsum("nij,nj->ni", R_acc, t) + t_acc
        R_acc = R_acc @ R
    return np.einsum("nij,j->ni", R_acc, chain.tool_zero.translation) + t_acc


@dataclass(frozen=True)
class DecisionVector:
    l1: float
    l2: float
    l3: float
    l4: float
    c: float

    @classmethod
    def from_array(cls, x) -> DecisionVector:
        x = [float(v) for v in x]
        if len(x) != 5:
            raise ValueError("decision vector has 5 components")
        return cls(*x)

    def as_array(self) -> np.ndarray:
        return np.array([self.l1, self.l2, self.l3, self.l4, self.c])

    @property
    def lengths(self) -> np.ndarray:
        return np.array([self.l1, self.l2, self.l3, self.l4])

    @property
    def total_length(self) -> float:
        return self.l1 + self.l2 + self.l3 + self.l4

    def check_bounds(self, tol: float = 1e-12) -> None:
        for name, v, lo, hi in zip("l1 l2 l3 l4 c".split(), self.as_array(), LB, UB):
            if not (lo - tol <= v <= hi + tol):
                raise OutOfBounds(f"{name}={v} outside [{lo}, {hi}]")


def _as_decision(x) -> DecisionVector:
    return x if isinstance(x, DecisionVector) else DecisionVector.from_array(x)


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def srl_chain(lengths, cfg: BodyParams, mode: str = "srl_upper") -> ChainModel:
    """SRL chain for arbitrary non-negative link lengths (no bound check)."""
    lay = cfg.layout
    mount = np.asarray(lay.mount, dtype=float)
    yaw, pitch, down = _unit(lay.yaw_axis), _unit(lay.pitch_axis), _unit(lay.link_direction)
    lengths = [float(v) for v in lengths]
    offsets = np.cumsum([0.0] + lengths)
    axes = (yaw, pitch, pitch, pitch)
    locked = mode == "srl_lower"
    joints = []
    for i in range(4):
        lock = locked and i in (0, 3)
        angle = lay.lower_locked_angles[0 if i == 0 else 1] if lock else 0.0
        joints.append(JointSpec(Twist(axes[i], mount + offsets[i] * down),
                                tuple(lay.joint_limits[i]), lock, angle))
    tool = Pose.from_translation(mount + offsets[4] * down)
    return ChainModel(tuple(joints), tool, mode, tuple(lengths))


def build_srl_upper(x, cfg: BodyParams) -> ChainModel:
    """All four joints free (reaching/grasping mode)."""
    x = _as_decision(x)
    x.check_bounds()
    return srl_chain(x.lengths, cfg, "srl_upper")


def build_srl_lower(x, cfg: BodyParams) -> ChainModel:
    """Support mode: q1 and q4 locked, q2/q3 act as hip and knee."""
    x = _as_decision(x)
    x.check_bounds()
    return srl_chain(x.lengths, cfg, "srl_lower")


def build_human_arm(cfg: BodyParams) -> ChainModel:
    arm = cfg.arm
    if arm.upper_arm <= 0 or arm.forearm <= 0:
        raise InvalidConfig("arm segment lengths must be positive")
    if any(lo > hi for lo, hi in arm.joint_limits):
        raise InvalidConfig("arm joint limits reversed")
    s = np.asarray(arm.shoulder, dtype=float)
    down = np.array([0.0, 0.0, -1.0])
    elbow = s + arm.upper_arm * down
    axes_points = [
        ((0.0, -1.0, 0.0), s),  # abduction, positive moves the hand outward
        ((1.0, 0.0, 0.0), s),  # flexion, positive moves the hand forward
        ((0.0, 0.0, 1.0), s),  # humeral rotation
        ((1.0, 0.0, 0.0), elbow),  # elbow flexion
    ]
    joints = tuple(JointSpec(Twist(w, q), tuple(lim))
                   for (w, q), lim in zip(axes_points, arm.joint_limits))
    tool = Pose.from_translation(elbow + arm.forearm * down)
    return ChainModel(joints, tool, "human_arm", (arm.upper_arm, arm.forearm))


def build_cane_model(cfg: BodyParams) -> ChainModel:
    cane = cfg.cane
    if cane.length <= 0:
        raise InvalidConfig("cane length must be positive")
    if cane.sagittal[0] > cane.sagittal[1] or cane.lateral[0] > cane.lateral[1]:
        raise InvalidConfig("cane sweep limits reversed")
    p = np.asarray(cane.pivot, dtype=float)
    joints = (
        JointSpec(Twist((1.0, 0.0, 0.0), p), tuple(cane.sagittal)),
        JointSpec(Twist((0.0, -1.0, 0.0), p), tuple(cane.lateral)),
    )
    tool = Pose.from_translation(p + np.array([0.0, 0.0, -cane.length]))
    return ChainModel(joints, tool, "cane", (cane.length,))


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    sample_seed: int
    mode_tag: str

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite values")
        if self.mode_tag not in MODES:
            raise ValueError(f"unknown mode {self.mode_tag!r}")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)


def _block_angles(chain: ChainModel, seed: int, block: int, count: int) -> np.ndarray:
    rng = np.random.default_rng([seed, block])
    lo = np.array([j.limits[0] for j in chain.joints])
    hi = np.array([j.limits[1] for j in chain.joints])
    return lo + (hi - lo) * rng.random((count, len(chain.joints)))


def sample_angles(chain: ChainModel, n: int, seed: int, threads: int = 1) -> np.ndarray:
    """Uniform joint samples within limits; block substreams keep the result
    independent of ``threads``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    sizes = [min(SAMPLE_BLOCK, n - b * SAMPLE_BLOCK) for b in range(-(-n // SAMPLE_BLOCK))]
    jobs = [(chain, seed, b, size) for b, size in enumerate(sizes)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda a: _block_angles(*a), jobs))
    else:
        parts = [_block_angles(*a) for a in jobs]
    return _effective_angles(chain, np.vstack(parts))


def sample_workspace(chain: ChainModel, n: int, seed: int, threads: int = 1) -> PointCloud:
    angles = sample_angles(chain, n, seed, threads)
    return PointCloud(fk_positions(chain, angles), seed, chain.mode)


# --- planar (sagittal) geometry of the support mode -------------------------

@functools.lru_cache(maxsize=64)
def _sagittal_frame(cfg: BodyParams):
    lay = cfg.layout
    down = _unit(lay.link_direction)
    if not np.allclose(down, (0.0, 0.0, -1.0), atol=1e-12):
        raise InvalidConfig("planar support analysis needs link_direction = -Z")
    yaw = _unit(lay.yaw_axis)
    q1 = lay.lower_locked_angles[0]
    pitch = exp_twist(Twist(yaw, np.zeros(3)), q1).rotation @ _unit(lay.pitch_axis)
    fwd = np.cross(pitch, down)
    return fwd, down


def _shank(l3, l4, q4):
    """Effective length and angular offset of the l3 + (locked) l4 segment."""
    fy = l3 + l4 * math.cos(q4)
    fz = l4 * math.sin(q4)
    return math.hypot(fy, fz), math.atan2(fz, fy)


def planar_ik(a: float, b: float, dy, dz):
    """Both elbow branches of a planar 2R chain reaching (dy, dz).

    Angles are measured from straight down towards forward. Returns
    ``(reachable, (th_hip_1, psi_1), (th_hip_2, psi_2))`` where ``psi`` is
    the relative knee angle; arrays broadcast over ``dy``/``dz``.
    """
    dy = np.asarray(dy, dtype=float)
    dz = np.asarray(dz, dtype=float)
    r2 = dy * dy + dz * dz
    cos_psi = (r2 - a * a - b * b) / (2 * a * b)
    reachable = np.abs(cos_psi) <= 1.0 + 1e-12
    psi = np.arccos(np.clip(cos_psi, -1.0, 1.0))
    base = np.arctan2(dy, -dz)
    out = []
    for sgn in (1.0, -1.0):
        ps = sgn * psi
        th = base - np.arctan2(b * np.sin(ps), a + b * np.cos(ps))
        out.append((_wrap(th), ps))
    return reachable, out[0], out[1]


def _wrap(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def _within(v, lim, tol=1e-12):
    return (v >= lim[0] - tol) & (v <= lim[1] + tol)


def contact_feasible(lengths, cfg: BodyParams, forward, ground_drop: float):
    """Whether the support chain with link ``lengths`` can place its tip on
    the floor at each forward offset (relative to joint 2) while respecting
    joint limits.

    ``ground_drop`` is the vertical distance from joint 2 down to the floor.
    """
    l1, l2, l3, l4 = lengths
    q4 = cfg.layout.lower_locked_angles[1]
    b, delta = _shank(l3, l4, q4)
    lim2 = np.asarray(cfg.layout.joint_limits[1], dtype=float)
    lim3 = np.asarray(cfg.layout.joint_limits[2], dtype=float)
    forward = np.asarray(forward, dtype=float)
    flat = np.ascontiguousarray(forward.reshape(-1))
    return contact_mask(flat, float(l2), b, delta, float(ground_drop), lim2, lim3
                        ).reshape(forward.shape)


def reduced_workspace(chain: ChainModel, ground_offset: float, n: int, seed: int,
                      cfg: BodyParams, enabled: bool = True, threads: int = 1) -> PointCloud:
    """Support-mode workspace once the tip closes a loop through the floor.

    The floor lies ``ground_offset`` below the mount. A sample survives when
    it is not below the floor and the tip can be planted on the floor
    directly beneath it without leaving the joint limits. Approximates the
    closed-loop constraint; see README.
    """
    if chain.mode != "srl_lower":
        raise ValueError("reduced workspace is defined for srl_lower chains")
    cloud = sample_workspace(chain, n, seed, threads)
    if not enabled:
        return cloud
    keep = reduce_mask(cloud.points, chain, cfg, ground_offset)
    if not keep.any():
        raise EmptyWorkspace("no sample survives the ground-contact filter")
    return PointCloud(cloud.points[keep], seed, chain.mode)


def reduce_mask(points: np.ndarray, chain: ChainModel, cfg: BodyParams,
                ground_offset: float) -> np.ndarray:
    fwd, down = _sagittal_frame(cfg)
    mount = np.asarray(cfg.layout.mount, dtype=float)
    l1 = chain.link_lengths[0]
    hip = mount + l1 * down
    floor_z = mount[2] - ground_offset
    above = points[:, 2] >= floor_z - 1e-12
    forward = (points - hip) @ fwd
    ok = contact_feasible(chain.link_lengths, cfg, forward, hip[2] - floor_z)
    return above & ok
