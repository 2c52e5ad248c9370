"""Tabulate H(l, b) on a (l, b/l) grid and summarize its shape.

    python scripts/advantage_surface.py --grid 50 --out surface.csv
"""
import argparse
import sys

import numpy as np

from blockopt.blocks import advantage_surface, hessian_nsd_fraction, surface_csv
from blockopt.model import Params


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=50)
    ap.add_argument("--l-max", type=float, default=10.0)
    ap.add_argument("--out")
    ap.add_argument("--hessian", action="store_true", help="also report the NSD fraction on l >= 2")
    args = ap.parse_args()

    p = Params()
    rows = advantage_surface((0.1, args.l_max), (0.0, 1.0), args.grid, p)
    text = surface_csv(rows)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)

    H = np.array([h for _, _, h in rows]).reshape(args.grid, args.grid)
    ls = np.array([l for l, _, _ in rows[:: args.grid]])
    rs = np.array([r for _, r, _ in rows[: args.grid]])
    i, j = np.unravel_index(np.argmax(H), H.shape)
    print(f"max H = {H[i, j]:.6g} at l = {ls[i]:.4g}, b/l = {rs[j]:.4g}", file=sys.stderr)
    print(f"min H = {H.min():.3g}; max H - 2b = {max(h - 2 * l * r for l, r, h in rows):.3g}", file=sys.stderr)
    if args.hessian:
        for lo, hi in ((2.0, 4.0), (4.0, 10.0), (2.0, 10.0)):
            pts = [(l, r * l) for l in np.linspace(lo, hi, 5) for r in np.linspace(0.2, 0.8, 5)]
            print(f"NSD fraction on l in [{lo}, {hi}]: {hessian_nsd_fraction(pts, p):.3f}", file=sys.stderr)


if __name__ == "__main__":
    main()
