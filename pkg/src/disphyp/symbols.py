"""Time-dependent matrix symbols, zone geometry and symbol-class checks.

Zones of the extended phase space are cut out by

    (1 + t) |xi| = N (log(e + t))**nu        (boundary t_xi)
    (1 + t) |xi| = N (log(e + t))**(2 nu)    (boundary tilde t_xi)

The pseudo-differential zone is ``t <= t_xi``, the oscillating zone
``t_xi < t <= tilde t_xi`` and the regular zone the rest.  Their union of
the last two is the hyperbolic zone.
"""
from dataclasses import dataclass, field
from enum import Enum
import json

import numpy as np

from . import jets as J
from .errors import ParseError, SymbolOrderError
from .expr import EvalContext, Expression

E = np.e


@dataclass(frozen=True)
class ZoneParams:
    """Zone constant ``N`` and oscillation parameter ``nu``."""

    N: float = 1.0
    nu: float = 0.0

    def __post_init__(self):
        if not (self.N > 0):
            raise ValueError("zone constant N must be positive")
        if not (0.0 <= self.nu <= 1.0):
            raise ValueError("oscillation parameter nu must lie in [0, 1]")

    def with_N(self, N):
        return ZoneParams(N=float(N), nu=self.nu)


class Zone(str, Enum):
    PD = "pd"
    OSC = "osc"
    REG = "reg"


@dataclass(frozen=True)
class ZoneLabel:
    zone: Zone
    t_xi: float
    t_xi_tilde: float


@dataclass(frozen=True)
class SymbolClassSpec:
    """Class S{m1, m2} with derivative budgets (|alpha| <= l1, k <= l2)."""

    m1: float
    m2: float
    l1: int = 1
    l2: int = 1

    def __post_init__(self):
        for v in (self.l1, self.l2):
            if int(v) != v or v < 0:
                raise ValueError("derivative budgets must be non-negative integers")


def log_weight(t, nu):
    return np.log(E + np.asarray(t, dtype=float)) ** nu


def time_weight(t, nu):
    """(1/(1+t)) (log(e+t))**nu, the gain per time derivative."""
    t = np.asarray(t, dtype=float)
    return log_weight(t, nu) / (1.0 + t)


def _xi_norm(xi):
    xi = np.asarray(xi, dtype=float)
    return np.sqrt(np.sum(xi * xi, axis=-1)) if xi.ndim else np.abs(xi)


def boundary_time(r, zp, doubled=False):
    """Boundary time for frequency magnitudes ``r`` (vectorised).

    Bracketed bisection to width 1e-3 followed by a safeguarded Newton
    polish; points with ``r >= N`` are hyperbolic already at t = 0.
    """
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    if np.any(r <= 0) or not np.all(np.isfinite(r)):
        raise ValueError("zone boundary is undefined at zero frequency")
    p = zp.nu * (2.0 if doubled else 1.0)
    N = zp.N
    out = np.zeros_like(r)
    todo = r < N
    if np.any(todo):
        out[todo] = _solve_boundary(r[todo], N, p)
    return float(out[0]) if scalar else out


def _solve_boundary(r, N, p):
    def f(t):
        return (1.0 + t) * r - N * np.log(E + t) ** p

    def fprime(t):
        return r - N * p * np.log(E + t) ** (p - 1.0) / (E + t)

    lo = np.zeros_like(r)
    hi = 10.0 * N * (1.0 + np.log(E + 1.0 / r)) / r
    # widen the bracket where the log factor outgrows it (large p, tiny r)
    for _ in range(200):
        bad = f(hi) <= 0
        if not np.any(bad):
            break
        hi = np.where(bad, 2.0 * hi, hi)
    while True:
        wide = (hi - lo) > 1e-3
        if not np.any(wide):
            break
        mid = 0.5 * (lo + hi)
        neg = f(mid) < 0
        lo = np.where(wide & neg, mid, lo)
        hi = np.where(wide & ~neg, mid, hi)
    t = 0.5 * (lo + hi)
    for _ in range(60):
        val = f(t)
        if np.all(np.abs(val) <= 1e-13 * N):
            break
        t = np.clip(t - val / fprime(t), lo, hi)
    return t


def zone_boundary(xi, zp, doubled=False):
    """Boundary time t_xi (tilde t_xi when ``doubled``) for a frequency vector
    or a batch of vectors ``(..., n)``."""
    return boundary_time(_xi_norm(np.atleast_1d(xi)), zp, doubled)


def classify_zone(t, xi, zp):
    t_xi = zone_boundary(xi, zp)
    t_til = zone_boundary(xi, zp, doubled=True) if zp.nu > 0 else t_xi
    if t <= t_xi:
        z = Zone.PD
    elif t <= t_til:
        z = Zone.OSC
    else:
        z = Zone.REG
    return ZoneLabel(z, t_xi, t_til)


def zone_of(t, xi, zp):
    """Vectorised zone codes: 0 = pd, 1 = osc, 2 = reg."""
    t = np.asarray(t, dtype=float)
    t_xi = zone_boundary(xi, zp)
    t_til = zone_boundary(xi, zp, doubled=True) if zp.nu > 0 else t_xi
    return np.where(t <= t_xi, 0, np.where(t <= t_til, 1, 2))


def weight_xi_t(t, xi, zp):
    """max(|xi|, N (log(e+t))**nu / (1+t))."""
    return np.maximum(_xi_norm(xi), zp.N * time_weight(t, zp.nu))


def chi(s):
    """Smooth cutoff: 1 for s <= 1/2, 0 for s >= 1, monotone in between."""
    return 1.0 - J.smoothstep(2.0 * np.asarray(s, dtype=float) - 1.0)


def zone_variable(t, xi, zp, doubled=False):
    p = 2.0 if doubled else 1.0
    return _xi_norm(xi) * (1.0 + np.asarray(t, dtype=float)) / (
        zp.N * log_weight(t, zp.nu * p))


def cutoff_chi(t, xi, zp, which="pd"):
    """Zone cutoffs with chi_pd + chi_hyp = 1 exactly."""
    c = chi(zone_variable(t, xi, zp))
    if which == "pd":
        return c
    if which == "hyp":
        return 1.0 - c
    raise ValueError("which must be 'pd' or 'hyp'")


# ---------------------------------------------------------------------------
# symbols


def _as_batch(t, xi):
    t = np.asarray(t, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0:
        xi = xi[None]
    shape = np.broadcast_shapes(t.shape, xi.shape[:-1])
    return np.broadcast_to(t, shape), np.broadcast_to(xi, shape + xi.shape[-1:])


class TimeFrequencySymbol:
    """Matrix-valued symbol a(t, xi) with derivatives up to (l1, l2).

    Subclasses implement :meth:`jet`, returning a :class:`~disphyp.jets.Jet`
    of shape ``(*batch, m, m)``.
    """

    backend = "abstract"
    homogeneous = False

    def __init__(self, m, n, max_orders=(16, 16)):
        self.m = int(m)
        self.n = int(n)
        self.max_orders = (int(max_orders[0]), int(max_orders[1]))

    def jet(self, t, xi, space):
        raise NotImplementedError

    def values(self, t, xi):
        t, xi = _as_batch(t, xi)
        return self.jet(t, xi, J.get_space((), 0)).value

    def _check_orders(self, k, alpha):
        if k > self.max_orders[1] or sum(alpha) > self.max_orders[0]:
            raise SymbolOrderError(
                f"derivative (k={k}, |alpha|={sum(alpha)}) exceeds budget {self.max_orders}")

    def eval(self, t, xi, k=0, alpha=None):
        """Partial derivative d_t^k d_xi^alpha a(t, xi) (batched over leading axes)."""
        alpha = tuple(alpha) if alpha is not None else (0,) * self.n
        if len(alpha) != self.n:
            raise ValueError("multi-index length must equal n")
        self._check_orders(k, alpha)
        t, xi = _as_batch(t, xi)
        if k == 0 and not any(alpha):
            return self.values(t, xi)
        active = tuple([0] + [i + 1 for i in range(self.n)])
        sp = J.get_space(active, k + sum(alpha))
        jt = self.jet(t, xi, sp)
        return J.partial(jt, (k,) + alpha)

    def __add__(self, other):
        return LinearCombination([(1.0, self), (1.0, other)])

    def __sub__(self, other):
        return LinearCombination([(1.0, self), (-1.0, other)])


class ExpressionSymbol(TimeFrequencySymbol):
    """Symbol whose entries are expressions of the small grammar in :mod:`expr`."""

    backend = "exact-expression"

    def __init__(self, entries, n, homogeneous=False, max_orders=(16, 16)):
        rows = [list(r) for r in entries]
        m = len(rows)
        if m == 0 or any(len(r) != m for r in rows):
            raise ParseError("entries must form a non-empty square matrix")
        super().__init__(m, n, max_orders)
        self.sources = [[str(x) for x in r] for r in rows]
        self.exprs = [[Expression(x, n) for x in r] for r in self.sources]
        self.homogeneous = bool(homogeneous)

    @classmethod
    def from_config(cls, cfg):
        allowed = {"m", "n", "entries", "homogeneous"}
        extra = set(cfg) - allowed
        if extra:
            raise ParseError(f"unknown symbol keys: {sorted(extra)}")
        try:
            m, n, entries = int(cfg["m"]), int(cfg["n"]), cfg["entries"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"symbol config incomplete: {exc}") from None
        sym = cls(entries, n, homogeneous=cfg.get("homogeneous", False))
        if sym.m != m:
            raise ParseError("declared m does not match entries")
        return sym

    @classmethod
    def from_json(cls, text):
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid symbol JSON: {exc}") from None
        return cls.from_config(cfg)

    def to_config(self):
        return {"m": self.m, "n": self.n, "entries": self.sources,
                "homogeneous": self.homogeneous}

    def compose(self, t, coords):
        """Entries evaluated at given coordinate jets/arrays (``t`` a plain array).

        Lets callers push their own jets (e.g. along a curve) through the
        symbol; all ``coords`` must share one jet space.
        """
        sp = next((c.space for c in coords if isinstance(c, J.Jet)), None)
        ctx = EvalContext(np.asarray(t, dtype=float), np.zeros(self.n), sp)
        ctx._cache["t"] = np.asarray(t, dtype=float)
        for k, c in enumerate(coords, start=1):
            ctx._cache[("xi", k)] = c
        vals = [[self.exprs[a][b].evaluate(ctx) for b in range(self.m)] for a in range(self.m)]
        shape = np.broadcast_shapes(*[np.shape(v.value if isinstance(v, J.Jet) else v)
                                      for r in vals for v in r])
        if sp is None:
            out = np.zeros(shape + (self.m, self.m), dtype=complex)
            for a in range(self.m):
                for b in range(self.m):
                    out[..., a, b] = vals[a][b]
            return out
        c = np.zeros((sp.size,) + shape + (self.m, self.m), dtype=complex)
        for a in range(self.m):
            for b in range(self.m):
                v = vals[a][b]
                if isinstance(v, J.Jet):
                    c[..., a, b] = J._broadcast(v, shape)
                else:
                    c[0, ..., a, b] = v
        return J.Jet(sp, c)

    def values(self, t, xi):
        # plain numpy evaluation, no jet bookkeeping; a scalar t stays scalar
        # so that time-only subexpressions are computed once
        t = np.asarray(t, dtype=float)
        xi = np.asarray(xi, dtype=float)
        if xi.ndim == 0:
            xi = xi[None]
        shape = np.broadcast_shapes(t.shape, xi.shape[:-1])
        if t.ndim:
            t = np.broadcast_to(t, shape)
        xi = np.broadcast_to(xi, shape + xi.shape[-1:])
        ctx = EvalContext(t, xi, None)
        out = np.zeros(shape + (self.m, self.m), dtype=complex)
        for a in range(self.m):
            for b in range(self.m):
                out[..., a, b] = self.exprs[a][b].evaluate(ctx)
        return out

    def jet(self, t, xi, space):
        t, xi = _as_batch(t, xi)
        ctx = EvalContext(t, xi, space)
        shape = t.shape
        c = np.zeros((space.size,) + shape + (self.m, self.m), dtype=complex)
        for a in range(self.m):
            for b in range(self.m):
                v = self.exprs[a][b].evaluate(ctx)
                if isinstance(v, J.Jet):
                    c[..., a, b] = J._broadcast(v, shape)
                else:
                    c[0, ..., a, b] = v
        return J.Jet(space, c)


class CallableSymbol(TimeFrequencySymbol):
    """Black-box symbol ``func(t, xi) -> (..., m, m)`` with finite-difference derivatives.

    Mixed derivatives use tensor-product central stencils.  The base step per
    axis is ``max(1e-5, 1e-5 |x|)``; for total order j >= 2 the base 1e-5 is
    replaced by 1e-4 (j = 2) and 10**(j - 6) above, balancing truncation and
    rounding error.
    """

    backend = "central-finite-difference"

    def __init__(self, func, m, n, max_orders=(2, 2), homogeneous=False):
        super().__init__(m, n, max_orders)
        self.func = func
        self.homogeneous = homogeneous

    @staticmethod
    def _base_step(order):
        return {0: 1e-5, 1: 1e-5, 2: 1e-4}.get(order, 10.0 ** (order - 6))

    def jet(self, t, xi, space):
        t, xi = _as_batch(t, xi)
        if space.degree > sum(self.max_orders):
            raise SymbolOrderError("finite-difference jet degree exceeds budget")
        shape = t.shape
        c = np.zeros((space.size,) + shape + (self.m, self.m), dtype=complex)
        for idx, mono in enumerate(space.monomials):
            order = sum(mono)
            ex = dict(zip(space.active, mono))
            k = ex.get(0, 0)
            alpha = tuple(ex.get(i + 1, 0) for i in range(self.n))
            if k > self.max_orders[1] or sum(alpha) > self.max_orders[0]:
                continue
            c[idx] = self._fd(t, xi, k, alpha, order) / space.factorials[idx]
        return J.Jet(space, c)

    def _fd(self, t, xi, k, alpha, order):
        base = self._base_step(order)
        stencil = [((t, None), k)] + [((xi, i), a) for i, a in enumerate(alpha)]
        points = [(t, xi, 1.0)]
        for (arr, i), p in stencil:
            if p == 0:
                continue
            if i is None:
                h = np.maximum(base, base * np.abs(t))
            else:
                h = np.maximum(base, base * np.abs(xi[..., i]))
            new = []
            for (tt, xx, w) in points:
                for j in range(p + 1):
                    off = (0.5 * p - j) * h
                    coef = (-1) ** j * _binom(p, j) / h ** p
                    if i is None:
                        new.append((tt + off, xx, w * coef))
                    else:
                        x2 = np.array(xx)
                        x2[..., i] = x2[..., i] + off
                        new.append((tt, x2, w * coef))
            points = new
        acc = 0.0
        for tt, xx, w in points:
            acc = acc + np.asarray(w)[..., None, None] * np.asarray(self.func(tt, xx))
        return acc


def _binom(n, k):
    from math import comb
    return comb(n, k)


class LinearCombination(TimeFrequencySymbol):
    """Finite linear combination of symbols with constant coefficients."""

    def __init__(self, terms):
        terms = list(terms)
        m, n = terms[0][1].m, terms[0][1].n
        budget = tuple(min(s.max_orders[i] for _, s in terms) for i in range(2))
        super().__init__(m, n, budget)
        self.terms = terms
        self.backend = ("exact-expression"
                        if all(s.backend == "exact-expression" for _, s in terms)
                        else "central-finite-difference")
        self.homogeneous = all(s.homogeneous for _, s in terms)

    def jet(self, t, xi, space):
        out = None
        for c, s in self.terms:
            j = s.jet(t, xi, space) * c
            out = j if out is None else out + j
        return out


# ---------------------------------------------------------------------------
# class checks


@dataclass
class ClassReport:
    spec: SymbolClassSpec
    constants: dict = field(default_factory=dict)
    witness: dict = field(default_factory=dict)
    ceiling: float = 1e6
    passed: bool = True
    worst: tuple = None

    def as_dict(self):
        return {
            "m1": self.spec.m1, "m2": self.spec.m2, "l1": self.spec.l1, "l2": self.spec.l2,
            "ceiling": self.ceiling, "passed": self.passed,
            "constants": {_key(k): float(v) for k, v in self.constants.items()},
            "witness": {_key(k): [float(v[0]), [float(x) for x in v[1]]]
                        for k, v in self.witness.items()},
        }


def _key(k):
    return f"k={k[0]},alpha={''.join(str(a) for a in k[1])}"


def multi_indices(n, max_order):
    from .jets import _compositions
    return [m for d in range(max_order + 1) for m in _compositions(d, n)]


def symbol_grid(n, zp, n_times=32, t_max=1e4, per_shell=24, shells=12,
                n_dirs=8, rng=None, xi_min=None):
    """Default log-spaced class-check grid (times x dyadic shells x directions)."""
    times = np.concatenate([[0.0], np.geomspace(1e-2, t_max, n_times - 1)])
    lo = xi_min if xi_min is not None else zp.N * 2.0 ** (-shells // 2)
    mags = lo * 2.0 ** (np.arange(shells * per_shell) / per_shell)
    dirs = sphere_directions(n, n_dirs, rng)
    xi = (mags[:, None, None] * dirs[None, :, :]).reshape(-1, n)
    tt = np.repeat(times, xi.shape[0])
    xx = np.tile(xi, (len(times), 1))
    return tt, xx


def sphere_directions(n, count, rng=None):
    """Deterministic spread of unit vectors (random when ``rng`` is given)."""
    if n == 1:
        return np.array([[1.0], [-1.0]])[:max(1, min(count, 2))]
    if rng is not None:
        v = rng.standard_normal((count, n))
        return v / np.linalg.norm(v, axis=1, keepdims=True)
    if n == 2:
        ang = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    # golden-spiral points on S^2, padded with zeros for n > 3
    k = np.arange(count) + 0.5
    z = 1 - 2 * k / count
    phi = np.pi * (1 + 5 ** 0.5) * k
    rr = np.sqrt(1 - z * z)
    pts = np.stack([rr * np.cos(phi), rr * np.sin(phi), z], axis=1)
    if n > 3:
        pts = np.concatenate([pts, np.zeros((count, n - 3))], axis=1)
    return pts


def _opnorm(x):
    return np.linalg.svd(x, compute_uv=False)[..., 0]


def check_symbol_class(sym, spec, zp, grid, ceiling=1e6, chunk=2048, jet_fn=None):
    """Empirical symbol-class constants on ``grid = (t, xi)``.

    ``jet_fn(t, xi, space)`` overrides ``sym.jet`` (used for derived symbols
    such as diagonalisation remainders).
    """
    if spec.l1 > sym.max_orders[0] or spec.l2 > sym.max_orders[1]:
        raise SymbolOrderError(
            f"class budgets ({spec.l1}, {spec.l2}) exceed symbol budgets {sym.max_orders}")
    t_all, xi_all = grid
    t_all = np.asarray(t_all, dtype=float)
    xi_all = np.asarray(xi_all, dtype=float).reshape(len(t_all), -1)
    if len(t_all) == 0:
        raise ValueError("empty grid")
    n = xi_all.shape[1]
    alphas = multi_indices(n, spec.l1)
    keys = [(k, a) for k in range(spec.l2 + 1) for a in alphas]
    active = tuple(range(n + 1))
    sp = J.get_space(active, spec.l1 + spec.l2)
    fn = jet_fn if jet_fn is not None else sym.jet
    rep = ClassReport(spec=spec, ceiling=ceiling)
    best = {k: (-1.0, None) for k in keys}
    for s in range(0, len(t_all), chunk):
        tt, xx = t_all[s:s + chunk], xi_all[s:s + chunk]
        jt = fn(tt, xx, sp)
        w_xi = weight_xi_t(tt, xx, zp)
        w_t = time_weight(tt, zp.nu)
        for key in keys:
            k, a = key
            d = J.partial(jt, (k,) + a)
            val = _opnorm(d) if d.ndim >= 3 else np.abs(d)
            ratio = val / (w_xi ** (spec.m1 - sum(a)) * w_t ** (spec.m2 + k))
            i = int(np.argmax(ratio))
            if ratio[i] > best[key][0]:
                best[key] = (float(ratio[i]), (float(tt[i]), xx[i].tolist()))
    for key, (c, w) in best.items():
        rep.constants[key] = c
        rep.witness[key] = w
    worst = max(keys, key=lambda q: rep.constants[q])
    rep.worst = worst
    rep.passed = bool(all(np.isfinite(v) and v <= ceiling for v in rep.constants.values()))
    return rep
