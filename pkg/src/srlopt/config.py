"""Configuration dataclasses and the strict JSON loader.

World frame used throughout: origin on the floor midway between the feet,
X lateral (towards the SRL side), Y forward, Z up. Lengths in meters.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

SCHEMA_VERSION = 1

LB = (0.1, 0.1, 0.1, 0.1, -0.5)
UB = (0.6, 0.6, 0.6, 0.6, 0.5)

HALF_PI = math.pi / 2


class InvalidConfig(ValueError):
    """Raised for schema violations and physically meaningless parameters."""


@dataclass(frozen=True)
class SRLLayout:
    """Axis layout of the 4R limb at zero posture.

    Joint 1 turns about ``yaw_axis`` at the mount; joints 2-4 turn about
    ``pitch_axis``. All links hang along ``link_direction`` at zero posture.
    """

    mount: tuple[float, float, float] = (0.20, 0.0, 0.95)
    yaw_axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    pitch_axis: tuple[float, float, float] = (1.0, 0.0, 0.0)
    link_direction: tuple[float, float, float] = (0.0, 0.0, -1.0)
    joint_limits: tuple[tuple[float, float], ...] = (
        (-HALF_PI, HALF_PI),
        (-HALF_PI, HALF_PI),
        (0.0, 5 * math.pi / 6),
        (-HALF_PI, HALF_PI),
    )
    # lower-limb mode locks q1 and q4
    lower_locked_angles: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class ArmParams:
    """Right arm: spherical shoulder (abduction, flexion, rotation) + elbow."""

    shoulder: tuple[float, float, float] = (0.18, 0.0, 1.40)
    upper_arm: float = 0.30
    forearm: float = 0.33
    joint_limits: tuple[tuple[float, float], ...] = (
        (-math.pi / 12, HALF_PI),
        (-math.pi / 4, 5 * math.pi / 6),
        (-HALF_PI, HALF_PI),
        (0.0, 5 * math.pi / 6),
    )


@dataclass(frozen=True)
class CaneParams:
    """Cane held in the hand, tip swinging about a pivot at hand height."""

    pivot: tuple[float, float, float] = (0.25, 0.10, 0.85)
    length: float = 0.85
    sagittal: tuple[float, float] = (-math.pi / 6, math.pi / 6)
    lateral: tuple[float, float] = (-math.pi / 12, math.pi / 12)


@dataclass(frozen=True)
class STSParams:
    """Sit-to-stand pose set for the static support-force model.

    Mount positions are (forward, height) pairs in the sagittal plane, the
    feet sit at forward = 0 and the limb tip is pinned on the floor at
    forward = c.
    """

    n_poses: int = 11
    sit_mount: tuple[float, float] = (-0.30, 0.55)
    stand_mount: tuple[float, float] = (0.0, 0.95)


@dataclass(frozen=True)
class BodyParams:
    L0: float = 0.9
    rho_lin: float = 0.208  # kg/m, carbon tube
    # joint-2, joint-3, joint-4 modules and the end effector
    module_masses: tuple[float, float, float, float] = (1.0, 0.521, 0.521, 0.3)
    # rated torques q1..q4, N*m
    torque_limits: tuple[float, float, float, float] = (38.0, 38.0, 8.3, 8.3)
    kappa: float = 100.0
    ground_offset: float = 0.95
    min_thickness: float = 1e-3
    obl_eps: float = 1e-6
    layout: SRLLayout = field(default_factory=SRLLayout)
    arm: ArmParams = field(default_factory=ArmParams)
    cane: CaneParams = field(default_factory=CaneParams)
    sts: STSParams = field(default_factory=STSParams)

    def __post_init__(self):
        if self.L0 <= 0 or self.rho_lin <= 0 or self.kappa <= 0:
            raise InvalidConfig("L0, rho_lin and kappa must be positive")
        if any(m < 0 for m in self.module_masses):
            raise InvalidConfig("module masses must be non-negative")
        if any(t < 0 for t in self.torque_limits):
            raise InvalidConfig("torque limits must be non-negative")
        if len(self.module_masses) != 4 or len(self.torque_limits) != 4:
            raise InvalidConfig("need 4 module masses and 4 torque limits")


@dataclass(frozen=True)
class SamplingParams:
    n: int = 10000  # reporting
    n_opt: int = 2000  # inside the optimizer
    fit_tol: float = 1e-7
    opt_fit_tol: float = 1e-5
    front_budget: int = 2000
    # seeds the common random numbers, reference clouds and front estimate
    seed: int = 0

    def __post_init__(self):
        if min(self.n, self.n_opt, self.front_budget) < 1:
            raise InvalidConfig("sample counts and front_budget must be >= 1")
        if self.fit_tol <= 0 or self.opt_fit_tol <= 0:
            raise InvalidConfig("fit tolerances must be positive")


@dataclass(frozen=True)
class SolverParams:
    pop: int = 81
    max_iter: int = 300
    alpha: float = 0.5
    alpha_final: float = 0.05
    I0: float = 1.0
    I_min: float = 0.2
    gamma: float = 1.0
    beta0: float = 1.0
    beta_min: float = 0.01
    eta: float = 10.0
    k_replace: float = 0.1  # fraction of (UB - LB)
    conv_threshold: float = 0.2
    conv_window: int = 10
    use_replacement: bool = True
    use_partition: bool = True

    def __post_init__(self):
        if self.pop < 3:
            raise InvalidConfig("pop must be >= 3")
        if self.max_iter < 1 or self.conv_window < 1:
            raise InvalidConfig("max_iter and conv_window must be >= 1")
        if min(self.I0, self.gamma, self.eta) <= 0:
            raise InvalidConfig("I0, gamma and eta must be positive")
        if self.I_min < 0 or self.beta_min < 0 or self.beta0 < 0:
            raise InvalidConfig("I_min, beta0 and beta_min must be >= 0")


@dataclass(frozen=True)
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    body: BodyParams = field(default_factory=BodyParams)
    solver: SolverParams = field(default_factory=SolverParams)
    sampling: SamplingParams = field(default_factory=SamplingParams)
    algorithm: str = "mscfa"
    seed: int = 0
    n_runs: int = 10
    threads: int = 1
    record_timing: bool = False
    output_dir: str = "out"

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise InvalidConfig(f"unsupported schema_version {self.schema_version}")
        if self.algorithm not in ("mscfa", "fa", "random"):
            raise InvalidConfig(f"unknown algorithm {self.algorithm!r}")
        if self.threads < 1 or self.n_runs < 1:
            raise InvalidConfig("threads and n_runs must be >= 1")


# fields that never change numeric results
_HASH_EXCLUDED = ("threads", "output_dir", "record_timing", "n_runs")


def _from_dict(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise InvalidConfig(f"{path or 'config'}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise InvalidConfig(f"{path or 'config'}: unknown keys {sorted(unknown)}")
    defaults = cls()
    kwargs = {}
    for name, value in data.items():
        sub = _NESTED.get(cls, {}).get(name)
        where = f"{path}.{name}".lstrip(".")
        if sub is not None:
            kwargs[name] = _from_dict(sub, value, where)
        else:
            kwargs[name] = _coerce(value, getattr(defaults, name), where)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise InvalidConfig(str(exc)) from exc


def _coerce(value, default, path):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise InvalidConfig(f"{path}: expected a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise InvalidConfig(f"{path}: expected an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise InvalidConfig(f"{path}: expected a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise InvalidConfig(f"{path}: expected a string")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list) or len(value) != len(default):
            raise InvalidConfig(f"{path}: expected a list of length {len(default)}")
        return tuple(_coerce(v, d, f"{path}[{i}]") for i, (v, d) in enumerate(zip(value, default)))
    raise InvalidConfig(f"{path}: unsupported value")


_NESTED = {
    RunConfig: {"body": BodyParams, "solver": SolverParams, "sampling": SamplingParams},
    BodyParams: {"layout": SRLLayout, "arm": ArmParams, "cane": CaneParams, "sts": STSParams},
}


def config_from_dict(data: dict) -> RunConfig:
    """Build a validated :class:`RunConfig`; unknown keys are rejected."""
    return _from_dict(RunConfig, data, "")


def load_config(path) -> RunConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"{path}: {exc}") from exc
    return config_from_dict(data)


def config_to_dict(cfg) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(cfg)))


def stable_hash(obj) -> str:
    """Short sha256 over the canonical JSON of a dataclass or plain dict."""
    data = config_to_dict(obj) if dataclasses.is_dataclass(obj) else obj
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def config_hash(cfg: RunConfig) -> str:
    data = config_to_dict(cfg)
    for key in _HASH_EXCLUDED:
        data.pop(key, None)
    return stable_hash(data)
