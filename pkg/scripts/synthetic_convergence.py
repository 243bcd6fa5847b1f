"""MSCFA vs plain FA on the synthetic biobjective problem.

Prints final cost and convergence iteration (threshold 0.05, window 10) per
seed. Usage: python3 scripts/synthetic_convergence.py [N_SEEDS]
"""
import sys

from srlopt.config import SolverParams
from srlopt.solver import SyntheticBiobjective, run, run_baseline_fa


def main(n_seeds=10):
    prob = SyntheticBiobjective()
    params = SolverParams(conv_threshold=0.05, conv_window=10)
    wins = 0
    print("seed,mscfa_phi,mscfa_conv,fa_phi,fa_conv")
    for s in range(n_seeds):
        b1, t1 = run(prob, params, s)
        b2, t2 = run_baseline_fa(prob, params, s)
        c1 = t1.conv_iter if t1.conv_iter is not None else float("inf")
        c2 = t2.conv_iter if t2.conv_iter is not None else float("inf")
        wins += c1 < c2
        print(f"{s},{b1.phi:.5f},{c1},{b2.phi:.5f},{c2}")
    print(f"# MSCFA converged first in {wins}/{n_seeds} seeds")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 10)
