"""GH bracket between the warped torus at scale lam and its base circle, swept over lam.

Prints one row per lam: fiber length scale, lower and upper GH bounds, and the grid slack.

    python3 scripts/gh_collapse_sweep.py --lams 1 0.25 0.0625 0.015625 0.001 --nr 128
"""
import argparse
import math

import numpy as np

from rfcollapse.config import ScenarioConfig
from rfcollapse.flow import WarpedSurfaceMetric
from rfcollapse.scenarios import r_circle_slack, torus_vs_circle


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--lams", type=float, nargs="+", default=[1.0, 0.25, 0.0625, 0.015625, 1e-3])
    p.add_argument("--nr", type=int, default=128)
    p.add_argument("--ns", type=int, default=32)
    p.add_argument("--budget", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    cfg = ScenarioConfig("collapsing_torus", nr=args.nr, ns=args.ns, budget=args.budget)
    print(f"{'lam':>10} {'max fiber':>10} {'gh_lower':>10} {'gh_upper':>10} {'slack':>8}")
    for lam in args.lams:
        m = WarpedSurfaceMetric.from_profile(lambda r: 2 + np.cos(r), lam, args.nr)
        res = torus_vs_circle(m, cfg, seed=args.seed)
        fiber = 2 * math.pi * float(np.sqrt(m.b).max())
        print(f"{lam:10.4g} {fiber:10.4f} {res['gh_lower']:10.4f} {res['gh_upper']:10.4f} {r_circle_slack(m):8.4f}")


if __name__ == "__main__":
    main()
