"""Decay of surface kernels J(lam, z) for sphere and quartic Fresnel surfaces."""
import argparse

import numpy as np

from disphyp.fresnel import ExpressionPhase, build_surface
from disphyp.oscillatory import kernel_decay

CASES = [("circle", "abs_xi", 2, 2), ("sphere n=3", "abs_xi", 3, 2),
         ("quartic", "(xi[1]**4 + xi[2]**4)**0.25", 2, 4)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lam-min", type=float, default=10.0)
    ap.add_argument("--lam-max", type=float, default=1e4)
    ap.add_argument("--num", type=int, default=16)
    args = ap.parse_args()
    if args.num < 12 or args.lam_max < 1e3 * args.lam_min:
        ap.error("the decay fit needs --num >= 12 over at least three decades")
    lams = np.geomspace(args.lam_min, args.lam_max, args.num)
    for label, src, n, gamma in CASES:
        surf = build_surface(ExpressionPhase(src, n), count=64 if n == 2 else 32)
        # the point on the positive xi_1 axis is where the quartic is flattest
        fit, vals = kernel_decay(surf, int(np.argmax(surf.points[:, 0])), lams, gamma)
        print(f"{label:11s} slope {fit.slope:+.4f} (theory {fit.theoretical:+.4f}) "
              f"window {fit.window[0]:.3g}-{fit.window[1]:.3g}  C_fit {fit.C_fit:.3g}  "
              f"max quad err {max(v.error for v in vals):.1e}")


if __name__ == "__main__":
    main()
