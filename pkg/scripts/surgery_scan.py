"""Scan random two- and three-interval resources for surgery instances and refine them.

    python scripts/surgery_scan.py --count 40 --seed 1
"""
import argparse

import numpy as np

from blockopt import phaseplane
from blockopt.equilibrium import polish
from blockopt.model import Params
from blockopt.verify import random_mu, random_resource


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=40)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    hits = 0
    for _ in range(args.count):
        m = random_resource(rng, max_intervals=3)
        p = Params(mu=random_mu(rng, 0.02, 2.0))
        sol = polish(m, p)
        if not phaseplane.find_surgery_instances(m, p, sol):
            continue
        hits += 1
        try:
            out = phaseplane.block_refine(m, p)
        except (phaseplane.SurgeryDegenerate, phaseplane.IterationLimit) as exc:
            print(f"{m.intervals} mu={p.mu:.3g}: {type(exc).__name__}")
            continue
        print(f"{[tuple(round(v, 3) for v in iv) for iv in m.intervals]} mu={p.mu:.3g}: "
              f"{out.surgeries} surgeries, mass {out.mass_before:.4f} -> {out.mass_after:.4f}, "
              f"|dF| = {abs(out.pop_after - out.pop_before):.1e}, kinds {out.kinds}")
    print(f"{hits} of {args.count} resources carried a surgery instance")


if __name__ == "__main__":
    main()
