"""Desk-scale L^p-L^q decay: wave family vs constant control, plus a resolution check."""
import argparse
import json
import time

from disphyp.cli import DecaySettings, _decay_run
from disphyp.example_systems import get_family


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=1024)
    ap.add_argument("--family", default="wave_slow_osc")
    ap.add_argument("--control", default="wave_constant")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--json", help="write the exponents here")
    args = ap.parse_args()
    st = DecaySettings(points=args.points, pq=[[4 / 3, 4.0], [1.5, 3.0], [1.2, 6.0]])
    res = {}
    for label, fam, pts in (("main", args.family, args.points),
                            ("control", args.control, args.points),
                            ("coarse", args.family, args.points // 2)):
        t0 = time.perf_counter()
        rep, low, snaps = _decay_run(get_family(fam), st, pts, args.threads)
        res[label] = {"family": fam, "points": pts, "seconds": time.perf_counter() - t0,
                      "exponents": {f"{e.p:.4g},{e.q:.4g}": e.exponent for e in rep.entries},
                      "predicted": {f"{e.p:.4g},{e.q:.4g}": e.predicted for e in rep.entries},
                      "low_frequency_slope": low["slope"]}
        print(f"{label:8s} {fam:16s} {pts:5d}^2  "
              + "  ".join(f"({k}) {v:+.4f}" for k, v in res[label]["exponents"].items())
              + f"  low-freq {low['slope']:+.3f}  [{res[label]['seconds']:.0f}s]")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(res, fh, indent=2)


if __name__ == "__main__":
    main()
