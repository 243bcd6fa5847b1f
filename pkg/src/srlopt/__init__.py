"""Kinematic design optimization of a 4-DoF supernumerary robotic limb.

Modules:
    kinematics: serial-chain models, forward kinematics, workspace sampling.
    ellipsoid: minimum-volume enclosing ellipsoids and shape metrics.
    objectives: the 11 sub-objectives and the I_GD scalarization.
    solver: MSCFA plus plain firefly and random-search baselines.
    bench: seeded multi-run statistics.
    cli: command-line entry point.
"""
from .config import RunConfig, load_config
from .ellipsoid import Ellipsoid, mvee_fit
from .kinematics import DecisionVector
from .objectives import SRLProblem, problem_from_config
from .solver import run, run_algorithm

__version__ = "0.1.0"

__all__ = [
    "DecisionVector", "Ellipsoid", "RunConfig", "SRLProblem", "load_config", "mvee_fit",
    "problem_from_config", "run", "run_algorithm",
]
