"""Batch runner: JSON config in, ``report.json`` plus CSV tables out.

Exit codes: 0 when every executed stage meets its pass criterion, 1 when a
stage fails (reports written so far are kept), 2 for configuration errors.
"""
import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cache import PropagatorTable, cached_table, default_cache_dir
from .errors import ConfigError, DisphypError, ParseError, StageDependencyError
from .example_systems import check_T_class, CoefficientFunction, get_family
from .symbols import ExpressionSymbol, ZoneParams, boundary_time, symbol_grid
from .system import HyperbolicSystem

log = logging.getLogger("disphyp")

STAGES = ("assumptions", "diagonalize", "propagate", "geometry", "oscillatory", "decay")
REQUIRES = {"decay": ("propagate",), "geometry": ("assumptions",)}
COMMANDS = {"check": "assumptions", "diagonalize": "diagonalize", "propagate": "propagate",
            "geometry": "geometry", "oscillatory": "oscillatory", "decay": "decay"}


# ---------------------------------------------------------------------------
# configuration


@dataclass
class AssumptionSettings:
    coefficients: list = field(default_factory=list)   # T-class checks: {expr, nu, rho}


@dataclass
class DiagonalizeSettings:
    k: int = 2
    points: int = 1000
    tol: float = 1e-8
    class_t_max: float = 1e4
    growth_tol: float = 1.25


@dataclass
class PropagateSettings:
    points: int = 100
    tol: float = 1e-7
    phase_budget: float = 150.0
    k: int = 2
    table_times: list = field(default_factory=lambda: [10.0, 100.0])
    table_xi: int = 16


@dataclass
class GeometrySettings:
    times: list = field(default_factory=lambda: [100.0])
    count: int = 64
    gamma_max: int = 4
    root: int = -1


@dataclass
class OscillatorySettings:
    models: list = field(default_factory=lambda: [
        {"phase": "xi[1]**2", "N": 1, "gamma": 2},
        {"phase": "xi[1]**4", "N": 1, "gamma": 4}])
    lambdas: list = field(default_factory=lambda: [10.0, 1e4, 16])
    slack: float = 0.05


@dataclass
class DecaySettings:
    points: int = 512
    L: float = 700.0
    T: float = 100.0
    t0: float = 5.0
    snapshots: int = 12
    pq: list = field(default_factory=lambda: [[4 / 3, 4.0]])
    sigma: float = 5.0
    eps_tol: float = 0.15
    h_max: float = 0.5
    control: str = None
    control_tol: float = 0.05
    doubling: bool = False
    doubling_tol: float = 0.05
    strict_tol: float = 0.05         # used when nu = 0 and F0 does not depend on xi
    smoothness: list = None          # [l1, l2] derivative budget; None = smooth symbol


SETTINGS = {"assumptions": AssumptionSettings, "diagonalize": DiagonalizeSettings,
            "propagate": PropagateSettings, "geometry": GeometrySettings,
            "oscillatory": OscillatorySettings, "decay": DecaySettings}


@dataclass
class CachePolicy:
    enabled: bool = True
    dir: str = None


@dataclass
class RunConfig:
    system: dict
    stages: list = field(default_factory=list)
    zone: dict = None
    seed: int = 0
    threads: int = 1
    out: str = "disphyp-out"
    cache: CachePolicy = field(default_factory=CachePolicy)
    settings: dict = field(default_factory=dict)

    def echo(self):
        d = dataclasses.asdict(self)
        d.pop("out")                # where the report lives, not what it says
        d["settings"] = {k: dataclasses.asdict(v) for k, v in self.settings.items()}
        return d


def _strict(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    extra = sorted(set(data) - names)
    if extra:
        raise ConfigError(f"{where}: unknown keys {extra}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_config(data):
    """Validate a config dict into a :class:`RunConfig` (unknown keys are errors)."""
    cfg = _strict(RunConfig, data, "config")
    if not isinstance(cfg.stages, list) or any(s not in STAGES for s in cfg.stages):
        raise ConfigError(f"stages must be a list drawn from {list(STAGES)}")
    if len(set(cfg.stages)) != len(cfg.stages):
        raise ConfigError("duplicate stage")
    cfg.cache = _strict(CachePolicy, cfg.cache if not isinstance(cfg.cache, CachePolicy)
                        else dataclasses.asdict(cfg.cache), "cache")
    if not isinstance(cfg.settings, dict):
        raise ConfigError("settings must be an object keyed by stage")
    bad = sorted(set(cfg.settings) - set(STAGES))
    if bad:
        raise ConfigError(f"settings: unknown stages {bad}")
    cfg.settings = {s: _strict(SETTINGS[s], cfg.settings.get(s, {}), f"settings.{s}")
                    for s in STAGES}
    if cfg.zone is not None:
        z = _strict(ZoneParams, cfg.zone, "zone")
        cfg.zone = {"N": z.N, "nu": z.nu}
    if not isinstance(cfg.seed, int) or not isinstance(cfg.threads, int) or cfg.threads < 1:
        raise ConfigError("seed must be an integer and threads a positive integer")
    check_dependencies(cfg.stages)
    build_system(cfg)           # fail fast on unknown families and bad symbols
    return cfg


def check_dependencies(stages):
    for s in stages:
        missing = [d for d in REQUIRES.get(s, ()) if d not in stages]
        if missing:
            raise StageDependencyError(f"stage {s!r} requires {missing}")


def with_dependencies(stage):
    out = {stage}
    for d in REQUIRES.get(stage, ()):
        out |= with_dependencies(d)
    return out


def build_system(cfg):
    spec = cfg.system
    if not isinstance(spec, dict):
        raise ConfigError("system must be an object")
    if "family" in spec:
        extra = sorted(set(spec) - {"family", "overrides"})
        if extra:
            raise ConfigError(f"system: unknown keys {extra}")
        system = get_family(spec["family"], **spec.get("overrides", {}))
    elif "symbol" in spec:
        extra = sorted(set(spec) - {"symbol"})
        if extra:
            raise ConfigError(f"system: unknown keys {extra}")
        system = _raw_system(spec["symbol"])
    else:
        raise ConfigError("system needs either 'family' or 'symbol'")
    if cfg.zone is not None:
        system = system.with_zone(ZoneParams(**cfg.zone))
    return system


def _raw_system(s):
    allowed = {"name", "A", "A1", "gamma", "hermitian_principal", "isotropic"}
    extra = sorted(set(s) - allowed)
    if extra:
        raise ConfigError(f"system.symbol: unknown keys {extra}")
    if "A" not in s or "A1" not in s:
        raise ConfigError("system.symbol needs 'A' and 'A1'")
    if not isinstance(s["A"], dict) or not isinstance(s["A1"], dict):
        raise ConfigError("system.symbol: 'A' and 'A1' must be objects {n, entries}")
    try:
        A = ExpressionSymbol.from_config(s["A"])
        A1 = ExpressionSymbol.from_config(dict(s["A1"], homogeneous=True))
        return HyperbolicSystem(s.get("name", "custom"), A, A1, gamma=s.get("gamma", "0"),
                                hermitian_principal=bool(s.get("hermitian_principal", False)),
                                isotropic=bool(s.get("isotropic", False)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"system.symbol: {exc}") from None


# ---------------------------------------------------------------------------
# output helpers


def _jsonable(x):
    if dataclasses.is_dataclass(x) and not isinstance(x, type):
        return _jsonable(dataclasses.asdict(x))
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else str(v)
    if isinstance(x, complex):
        return [_jsonable(x.real), _jsonable(x.imag)]
    return x


def dump_json(obj, path):
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"
    Path(path).write_text(text)


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, (float, np.floating)) else v for v in r])


def versions():
    import scipy
    return {"disphyp": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


# ---------------------------------------------------------------------------
# stages


class Context:
    def __init__(self, cfg, system, out):
        self.cfg, self.system, self.out = cfg, system, Path(out)
        self.results = {}
        self.cache_status = {}
        self.hierarchy = None

    def rng(self, stage):
        return np.random.default_rng([self.cfg.seed, STAGES.index(stage)])

    def settings(self, stage):
        return self.cfg.settings[stage]

    def get_hierarchy(self, k):
        from .diagonalizer import build_hierarchy
        if self.hierarchy is None or self.hierarchy.k != k:
            self.hierarchy = build_hierarchy(self.system, k=k)
        return self.hierarchy


def stage_assumptions(ctx):
    from .spectral import check_assumptions
    rep = check_assumptions(ctx.system)
    out = {"report": rep.as_dict(), "passed": rep.passed}
    coeffs = []
    for i, c in enumerate(ctx.settings("assumptions").coefficients):
        c = dict(c)
        expect = c.pop("expect", None)
        if set(c) - {"expr", "nu", "rho"}:
            raise ConfigError(f"coefficient {i}: unknown keys {sorted(set(c) - {'expr', 'nu', 'rho'})}")
        tr = check_T_class(CoefficientFunction(**c))
        ok = tr.passed if expect is None else tr.passed == bool(expect)
        coeffs.append({"coefficient": c, "expect": expect, "report": tr.as_dict(), "ok": ok})
    out["coefficients"] = coeffs
    out["passed"] = bool(rep.passed and all(c["ok"] for c in coeffs))
    write_rows(ctx.out / "assumptions_a1_constants.csv", ["key", "constant"],
               sorted(rep.a1_class_constants.items()))
    return out


def stage_diagonalize(ctx):
    from .diagonalizer import check_remainder_class, verify_operator_identity
    from .propagator import regular_samples
    st = ctx.settings("diagonalize")
    h = ctx.get_hierarchy(st.k)
    zp = h.eff_zone
    t, _, xi = regular_samples(ctx.system, zp, st.points, ctx.rng("diagonalize"))
    ident = verify_operator_identity(h, t, xi, tol=st.tol)
    classes = {}
    for tm in (st.class_t_max / 10, st.class_t_max):
        gt, gx = symbol_grid(ctx.system.n, zp, n_times=16, t_max=tm, per_shell=2, shells=12,
                             n_dirs=4)
        hyp = gt >= boundary_time(np.linalg.norm(gx, axis=1), zp)
        classes[tm] = check_remainder_class(h, zp, gt[hyp], gx[hyp])
    lo, hi = (classes[k] for k in sorted(classes))
    grows = any(hi.constants[k] > st.growth_tol * lo.constants[k] + 1e-12 for k in hi.constants)
    class_ok = bool(hi.passed and not grows)
    write_rows(ctx.out / "diagonalize_remainder_class.csv", ["key", "t_max", "constant"],
               [(key, tm, c) for tm, rep in sorted(classes.items())
                for key, c in sorted(rep.as_dict()["constants"].items())])
    return {"hierarchy": h.to_config(), "identity": ident.as_dict(),
            "remainder_class": {f"{tm:g}": rep.as_dict() for tm, rep in classes.items()},
            "remainder_bounded": class_ok, "passed": bool(ident.passed and class_ok)}


def _propagator_table(ctx, st):
    from .propagator import solve_direct
    system = ctx.system
    r = np.geomspace(1e-2, 10.0, st.table_xi) * system.zone.N
    xi = np.zeros((st.table_xi, system.n))
    xi[:, 0] = r
    times = np.asarray(st.table_times, dtype=float)

    def compute():
        E = np.stack([solve_direct(system, np.full(len(xi), t), 0.0, xi) for t in times])
        return PropagatorTable(E, times, xi, 0.0, system.config_hash(),
                               {"N": system.zone.N, "nu": system.zone.nu},
                               {"rtol": 1e-10, "atol": 1e-12})

    key = hashlib.sha256(json.dumps([system.config_hash(), times.tolist(), xi.tolist()],
                                    sort_keys=True).encode()).hexdigest()[:24]
    pol = ctx.cfg.cache
    where = Path(pol.dir) if pol.dir else default_cache_dir()
    table, status = cached_table(where / f"table-{key}.dhp", system.config_hash(), compute,
                                 use_cache=pol.enabled)
    ctx.cache_status["propagate"] = status
    return table


def stage_propagate(ctx):
    from .propagator import FactorizedPropagator, regular_samples, solve_direct
    st = ctx.settings("propagate")
    h = ctx.get_hierarchy(st.k)
    fp = FactorizedPropagator(h, ctx.system)
    t, s, xi = regular_samples(ctx.system, fp.zone, st.points, ctx.rng("propagate"),
                               phase_budget=st.phase_budget)
    Ef = fp(t, s, xi)
    Ed = solve_direct(ctx.system, t, s, xi)
    err = np.linalg.norm(Ef - Ed, 2, axis=(-2, -1))
    i = int(np.argmax(err))
    write_rows(ctx.out / "propagate_backend_errors.csv",
               ["t", "s"] + [f"xi{k + 1}" for k in range(ctx.system.n)] + ["error"],
               [[t[j], s[j], *xi[j], err[j]] for j in range(len(t))])
    table = _propagator_table(ctx, st)
    return {"points": len(t), "max_error": float(err.max()), "tol": st.tol,
            "witness": [float(t[i]), float(s[i]), xi[i].tolist()],
            "table": {"shape": list(table.E.shape), "payload_sha256": table.checksum()},
            "passed": bool(err.max() <= st.tol)}


def stage_geometry(ctx):
    from .fresnel import RootPhase, build_surface, contact_indices, export_csv
    st = ctx.settings("geometry")
    j = st.root % ctx.system.m
    out = {}
    for t in st.times:
        surf = build_surface(RootPhase(ctx.system, float(t), j), t=float(t), count=st.count)
        rep = contact_indices(surf, gamma_max=st.gamma_max)
        export_csv(surf, ctx.out / f"geometry_t{t:g}.csv", rep.orders)
        out[f"{t:g}"] = rep.as_dict()
    return {"root": j, "surfaces": out,
            "passed": not any(r["gamma_max_exceeded"] for r in out.values())}


def stage_oscillatory(ctx):
    from .oscillatory import ModelIntegralSpec, evaluate_model_integral, export_decay_csv, fit_decay
    st = ctx.settings("oscillatory")
    lo, hi, num = st.lambdas
    lams = np.geomspace(float(lo), float(hi), int(num))
    fits = []
    for i, m in enumerate(st.models):
        extra = sorted(set(m) - {"phase", "N", "gamma", "name"})
        if extra:
            raise ConfigError(f"oscillatory model {i}: unknown keys {extra}")
        spec = ModelIntegralSpec(int(m["N"]), m["phase"], int(m["gamma"]),
                                 name=m.get("name", f"model{i}"))
        vals = [evaluate_model_integral(spec, lam) for lam in lams]
        fit = fit_decay(lams, [v.value for v in vals], spec.gamma, spec.N, slack=st.slack)
        export_decay_csv(fit, ctx.out / f"oscillatory_{spec.name}.csv")
        d = fit.as_dict()
        d.update(name=spec.name, phase=m["phase"], max_quadrature_error=max(v.error for v in vals))
        d["passed"] = bool(fit.passed and fit.bound_holds
                           and abs(fit.slope - fit.theoretical) <= st.slack)
        fits.append(d)
    return {"fits": fits, "passed": all(f["passed"] for f in fits)}


def _decay_run(system, st, points, workers):
    from .dispersive import (GridConfig, decay_measurement, drift_is_xi_independent,
                             gaussian_data, grid_solve, low_frequency_decay)
    times = tuple(np.geomspace(st.t0, st.T, st.snapshots))
    strict = st.strict_tol if system.zone.nu == 0 and drift_is_xi_independent(system) else None
    g = GridConfig(n=system.n, points=points, L=st.L, times=times,
                   pq=tuple(tuple(p) for p in st.pq), t0=st.t0, h_max=st.h_max, workers=workers)
    U0 = gaussian_data(g, st.sigma, m=system.m)
    snaps = grid_solve(system, U0, g, times)
    rep = decay_measurement(snaps, eps_tol=st.eps_tol, data=U0, strict_tol=strict)
    low = low_frequency_decay(snaps, system.zone)
    return rep, low, snaps


def stage_decay(ctx):
    from .dispersive import export_norms_csv, theorem_hypotheses
    st = ctx.settings("decay")
    rep, low, snaps = _decay_run(ctx.system, st, st.points, ctx.cfg.threads)
    export_norms_csv(rep, ctx.out / "decay_norms.csv")
    write_rows(ctx.out / "decay_low_frequency.csv", ["t", "sup_norm"],
               zip(low["times"], low["sup_norms"]))
    out = {"report": rep.as_dict(), "low_frequency": low, "guard": snaps.guard,
           "theorem_hypotheses": theorem_hypotheses(ctx.system.n, rep.index, st.smoothness)}
    ok = rep.passed and low["passed"]
    if st.control:
        crep, _, _ = _decay_run(get_family(st.control), st, st.points, ctx.cfg.threads)
        diffs = [abs(a.exponent - b.exponent) for a, b in zip(rep.entries, crep.entries)]
        out["control"] = {"family": st.control, "report": crep.as_dict(),
                          "max_shift": max(diffs), "passed": max(diffs) < st.control_tol}
        ok = ok and out["control"]["passed"]
    if st.doubling:
        hrep, _, _ = _decay_run(ctx.system, st, st.points // 2, ctx.cfg.threads)
        diffs = [abs(a.exponent - b.exponent) for a, b in zip(rep.entries, hrep.entries)]
        out["doubling"] = {"coarse_points": st.points // 2, "report": hrep.as_dict(),
                           "max_shift": max(diffs), "passed": max(diffs) < st.doubling_tol}
        ok = ok and out["doubling"]["passed"]
    out["passed"] = bool(ok)
    return out


RUNNERS = {"assumptions": stage_assumptions, "diagonalize": stage_diagonalize,
           "propagate": stage_propagate, "geometry": stage_geometry,
           "oscillatory": stage_oscillatory, "decay": stage_decay}


# ---------------------------------------------------------------------------
# driver


@dataclass
class RunReport:
    config: dict
    versions: dict
    seed: int
    stages: dict = field(default_factory=dict)
    verdict: str = "pass"

    def as_dict(self):
        return {"config": self.config, "versions": self.versions, "seed": self.seed,
                "stages": self.stages, "verdict": self.verdict}


def run(cfg, out=None):
    """Run the configured stages; returns ``(exit_code, RunReport)``."""
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    system = build_system(cfg)
    ctx = Context(cfg, system, out)
    report = RunReport(cfg.echo(), versions(), cfg.seed)
    report.config["system_hash"] = system.config_hash()
    timings = {}
    code = 0
    for stage in [s for s in STAGES if s in cfg.stages]:
        t0 = time.perf_counter()
        try:
            res = RUNNERS[stage](ctx)
        except ConfigError:
            raise
        except (DisphypError, ValueError, np.linalg.LinAlgError) as exc:
            res = {"passed": False, "error": f"{type(exc).__name__}: {exc}"}
        timings[stage] = time.perf_counter() - t0
        report.stages[stage] = res
        log.info("%s: %s (%.1fs)", stage, "pass" if res["passed"] else "FAIL", timings[stage])
        if not res["passed"]:
            report.verdict = "fail"
            code = 1
        dump_json(report.as_dict(), out / "report.json")
        if "error" in res:
            break
    dump_json(report.as_dict(), out / "report.json")
    dump_json({"timings_s": timings, "cache": ctx.cache_status, "threads": cfg.threads},
              out / "timings.json")
    return code, report


def build_parser():
    ap = argparse.ArgumentParser(prog="disphyp", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=list(COMMANDS) + ["all", "run"],
                    help="stage to run (with its prerequisites); 'run' uses the config's list")
    ap.add_argument("--config", type=Path, help="JSON run configuration")
    ap.add_argument("--out", type=Path, help="output directory")
    ap.add_argument("--threads", type=int, help="worker pool size")
    ap.add_argument("--seed", type=int, help="RNG seed")
    ap.add_argument("--no-cache", action="store_true", help="bypass the propagator-table cache")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def load_config(path):
    if path is None:
        return {"system": {"family": "wave_slow_osc"}}
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"config is not valid JSON: {exc}") from None


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        data = load_config(args.config)
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data = dict(data)
        if args.command == "all":
            data["stages"] = list(STAGES)
        elif args.command != "run":
            want = with_dependencies(COMMANDS[args.command])
            data["stages"] = [s for s in STAGES if s in want]
        for key, val in (("out", args.out), ("threads", args.threads), ("seed", args.seed)):
            if val is not None:
                data[key] = str(val) if key == "out" else val
        if args.no_cache:
            data["cache"] = dict(data.get("cache", {}), enabled=False)
        cfg = parse_config(data)
        code, report = run(cfg)
    except (ConfigError, ParseError, StageDependencyError) as exc:
        print(f"disphyp: configuration error: {exc}", file=sys.stderr)
        return 2
    for name, res in report.stages.items():
        print(f"{name:12s} {'pass' if res['passed'] else 'FAIL'}"
              + (f"  ({res['error']})" if "error" in res else ""))
    print(f"verdict: {report.verdict}")
    return code


if __name__ == "__main__":
    sys.exit(main())
