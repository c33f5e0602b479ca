"""Contact indices of model phases and of the averaged root phases of bundled systems."""
import argparse

from disphyp.example_systems import get_family
from disphyp.fresnel import ExpressionPhase, RootPhase, build_surface, contact_indices

MODELS = {"circle": ("abs_xi", 2), "ellipse": ("sqrt(xi[1]**2 + 4*xi[2]**2)", 2),
          "quartic": ("(xi[1]**4 + xi[2]**4)**0.25", 2), "sphere3": ("abs_xi", 3),
          "sextic": ("(xi[1]**6 + xi[2]**6)**(1/6)", 2)}


def row(label, rep):
    print(f"{label:28s} gamma={rep.gamma} gamma0={rep.gamma0} kappa={rep.kappa:.6g} "
          f"kappa0={rep.kappa0:.6g} convex={rep.convex}"
          + ("  (gamma_max reached)" if rep.gamma_max_exceeded else ""))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=256)
    ap.add_argument("--times", type=float, nargs="+", default=[0.0, 10.0, 100.0])
    ap.add_argument("--gamma-max", type=int, default=6)
    args = ap.parse_args()
    for name, (src, n) in MODELS.items():
        surf = build_surface(ExpressionPhase(src, n), count=args.count if n == 2 else args.count // 2)
        row(name, contact_indices(surf, gamma_max=args.gamma_max, n_dirs=16))
    for fam in ("wave_slow_osc", "ho4_isotropic"):
        sys = get_family(fam)
        for t in args.times:
            surf = build_surface(RootPhase(sys, t, sys.m - 1), t=t, count=64)
            row(f"{fam} t={t:g}", contact_indices(surf, gamma_max=args.gamma_max, n_dirs=16))


if __name__ == "__main__":
    main()
