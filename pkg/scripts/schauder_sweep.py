"""Schauder norm ratios as alpha approaches the critical exponent.

For the cone over a circle with angle theta the critical exponent is
cot(theta) - 1.  Below it the ratios settle under refinement; the sweep
writes one row per (alpha, refinement) so the trend can be plotted.

Usage: python scripts/schauder_sweep.py [--theta 0.5236] [--out schauder_sweep.csv]
"""

import argparse
import csv
import math

import numpy as np

from edgeflow.geometry import Circle, EdgeConfig
from edgeflow.holder import schauder_ratio_experiment
from edgeflow.spectral import check_feasibility


def bump(t, x, z):
    return np.exp(-(((x - 0.5) / 0.15) ** 2)) + 0 * z + 0 * t


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--theta", type=float, default=math.pi / 6)
    ap.add_argument("--n-alpha", type=int, default=5)
    ap.add_argument("--refinements", type=int, nargs="+", default=[1, 2, 4])
    ap.add_argument("--out", default="schauder_sweep.csv")
    args = ap.parse_args()

    cfg = EdgeConfig(1, Circle.from_cone_angle(args.theta))
    a0 = check_feasibility(cfg).alpha0
    if not a0 > 0:
        raise SystemExit(f"theta = {args.theta} is not below pi/4; alpha0 = {a0:.4g}")
    alphas = np.linspace(0.1, 0.95, args.n_alpha) * a0
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "alpha0", "refinement", "ratio_2k_plus_2", "ratio_sqrt_t"])
        for a in alphas:
            rows = schauder_ratio_experiment(bump, float(a), 0, cfg, refinements=tuple(args.refinements))
            for r in rows:
                w.writerow([repr(float(a)), repr(a0), r["refinement"], repr(r["ratio_2k_plus_2"]),
                            repr(r["ratio_sqrt_t"])])
            spread = [r["ratio_2k_plus_2"] for r in rows]
            print(f"alpha = {a:.3f} (alpha0 = {a0:.3f}): 2+a ratios "
                  + " ".join(f"{v:.4g}" for v in spread))
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
