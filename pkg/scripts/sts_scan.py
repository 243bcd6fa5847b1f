"""1-D scans of the sit-to-stand support force over l2, l3 and l4.

Other lengths stay at (0.1, 0.4, 0.3, 0.2) with c = 0.198. Prints CSV.
"""
import numpy as np

from srlopt.config import BodyParams
from srlopt.objectives import sts_support_force

BASE = np.array([0.1, 0.4, 0.3, 0.2, 0.198])


def main():
    body = BodyParams()
    grid = np.linspace(0.1, 0.6, 51)
    print("length,F_l2,F_l3,F_l4")
    for v in grid:
        row = []
        for k in (1, 2, 3):
            x = BASE.copy()
            x[k] = v
            row.append(sts_support_force(x, body))
        print(f"{v:.3f}," + ",".join(f"{f:.4f}" for f in row))


if __name__ == "__main__":
    main()
