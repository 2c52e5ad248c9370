"""Grid-refinement ratios for random resources, aligned and unaligned endpoints.

    python scripts/grid_convergence.py --count 20
"""
import argparse

import numpy as np

from blockopt.equilibrium import solve
from blockopt.model import Params
from blockopt.verify import random_aligned_resource, random_mu, random_resource


def ratio(m, mu, grids=(256, 512, 1024)):
    a, b, c = (solve(m, Params(mu=mu, grid_n=n)).theta.values for n in grids)
    return float(np.max(np.abs(a - b[::2])) / np.max(np.abs(b - c[::2])))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    for label, draw in (("aligned", random_aligned_resource), ("unaligned", random_resource)):
        rs = [ratio(draw(rng), random_mu(rng)) for _ in range(args.count)]
        print(f"{label:9s} min {min(rs):.3f}  median {np.median(rs):.3f}  max {max(rs):.3f}")


if __name__ == "__main__":
    main()
