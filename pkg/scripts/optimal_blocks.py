"""Exhaustive block-configuration search for small total resource.

Prints the best configurations and the gap statistics for each m0.

    python scripts/optimal_blocks.py --m0 0.02 0.05 --grid 20
"""
import argparse
import json
import warnings

from blockopt.blocks import RegimeViolation, optimize_small_resource


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m0", type=float, nargs="+", default=[0.02, 0.05])
    ap.add_argument("--mu", type=float, default=1.0)
    ap.add_argument("--grid", type=int, default=20)
    ap.add_argument("--r-max", type=int, default=2)
    args = ap.parse_args()

    for m0 in args.m0:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RegimeViolation)
            res = optimize_small_resource(1.0, m0, args.mu, args.r_max, args.grid)
        others = sorted(g for c, g in zip(res.configs, res.gaps) if len(c.blocks) > 1)
        summary = {
            "m0": m0, "mu": args.mu, "configurations": len(res.configs),
            "best": [c.to_dict()["blocks"] for c in res.best],
            "single_block_wins": res.single_block_wins,
            "smallest_multi_block_gap": others[0] if others else None,
            "fitted_C3": res.fitted_C3,
            "gap_correlation": res.gap_correlation,
            "gap_correlation_comparable": res.gap_correlation_comparable,
        }
        print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
