"""Estimate the width of the unit ball relative to its boundary sphere.

Runs the min-max driver on the flat-disk sweepout of the unit ball and prints
the width estimate, the per-iteration maximal energy and the final-slice
conformality diagnostics.  The expected width is the area of an equatorial
disk, π.

    python scripts/unit_ball_width.py --h 0.05 --iters 50
"""

import argparse
import json
import math

from fbminmax import suites


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", type=float, default=0.05, help="mesh size")
    ap.add_argument("--iters", type=int, default=50, help="maximum number of tightening iterations")
    ap.add_argument("--grid-size", type=int, default=9, help="number of sweepout parameters")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    r = suites.width_benchmark(h=args.h, grid_size=args.grid_size, iters=args.iters, seed=args.seed)
    print(f"width      {r['width']:.6f}   (pi = {math.pi:.6f}, relative error {r['relative_error']:.2e})")
    print(f"iterations {r['iterations']}, max energy non-increasing: {r['monotone']}")
    print("final slice", json.dumps(r["final_slice"], default=float))
    print("PASS" if r["pass"] else "FAIL")


if __name__ == "__main__":
    main()
