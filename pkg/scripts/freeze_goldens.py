"""Regenerate tests/goldens/*.json from the current implementation.

Each golden was checked against an independent oracle before freezing
(see the matching test); rerun this only after a deliberate numerical change.
"""
import json
import tempfile
from pathlib import Path

import mpmath
import numpy as np

from disphyp.cli import main
from disphyp.diagonalizer import build_hierarchy, check_remainder_class, initial_remainder
from disphyp.example_systems import get_family
from disphyp.propagator import energy_two_sided
from disphyp.spectral import check_assumptions
from disphyp.symbols import (SymbolClassSpec, ZoneParams, boundary_time, check_symbol_class,
                             symbol_grid, zone_boundary)

OUT = Path(__file__).resolve().parents[1] / "tests" / "goldens"


def save(name, obj):
    (OUT / f"{name}.json").write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    print("wrote", name)


def hyp_grid(zp, t_max=1e4):
    gt, gx = symbol_grid(2, zp, n_times=16, t_max=t_max, per_shell=2, shells=12, n_dirs=4)
    hyp = gt >= boundary_time(np.linalg.norm(gx, axis=1), zp)
    return gt[hyp], gx[hyp]


def zone():
    t = float(zone_boundary(np.array([0.01]), ZoneParams(1.0, 1.0)))
    mpmath.mp.dps = 40
    ref = mpmath.findroot(lambda s: (1 + s) * mpmath.mpf("0.01") - mpmath.log(mpmath.e + s),
                          (100, 2000), solver="bisect")
    assert abs(t - float(ref)) < 1e-9 * float(ref)
    save("zone_boundary", {"nu1_r0.01": t})


def assumptions():
    rep = check_assumptions(get_family("wave_slow_osc"))
    save("assumptions_wave", {"a3_sup": rep.a3_sup, "a3_sup_by_horizon": rep.a3_sup_by_horizon})


def remainders():
    wave = get_family("wave_slow_osc")
    r0 = check_symbol_class(initial_remainder(wave), SymbolClassSpec(0, 1, 1, 1), wave.zone,
                            hyp_grid(wave.zone))
    h = build_hierarchy(wave, k=2)
    r2 = check_remainder_class(h, h.eff_zone, *hyp_grid(h.eff_zone))
    save("remainder_classes", {"N_eff": h.eff_zone.N, "R0": r0.as_dict()["constants"],
                               "R2": r2.as_dict()["constants"]})


def energy():
    w = get_family("wave_slow_osc")
    small = energy_two_sided(w, w.zone, count=1000, seed=0)
    big = energy_two_sided(w, w.zone, count=10000, seed=0)
    save("energy", {"wave_C_star_1000": small.C_star, "wave_C_star_10000": big.C_star,
                    "by_horizon_10000": {f"{k:g}": v for k, v in big.by_horizon.items()}})


def cli_check():
    with tempfile.TemporaryDirectory() as d:
        main(["check", "--out", d])
        rep = json.loads((Path(d) / "report.json").read_text())
    save("cli_assumptions_wave", rep["stages"])


if __name__ == "__main__":
    for f in (zone, assumptions, remainders, energy, cli_check):
        f()
