"""Superlinearity margins H(l1+l2, b1+b2) - H(l1, b1) - H(l2, b2) over a product sample.

    python scripts/superlinearity.py --n 10 --ratio-max 0.05
"""
import argparse
import json

import numpy as np

from blockopt.blocks import superlinearity_sweep
from blockopt.model import Params


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--l-min", type=float, default=1.0)
    ap.add_argument("--l-max", type=float, default=4.0)
    ap.add_argument("--ratio-min", type=float, default=0.01)
    ap.add_argument("--ratio-max", type=float, default=0.05)
    args = ap.parse_args()

    sweep = superlinearity_sweep(np.linspace(args.l_min, args.l_max, args.n),
                                 np.linspace(args.ratio_min, args.ratio_max, args.n), Params())
    print(json.dumps(sweep.to_dict(), indent=2))
    worst = min(sweep.samples, key=lambda s: s[-1])
    print("smallest margin at (l1, b1, l2, b2) =", tuple(round(v, 4) for v in worst[:4]))


if __name__ == "__main__":
    main()
