"""Fundamental solution E(t, s, xi) of D_t U = A(t, xi) U, i.e. dE/dt = i A E.

Three routes are provided:

* ``solve_direct``: batched adaptive DOP853 in every zone;
* the pseudo-differential zone: the same solver restricted to ``t <= t_xi``;
* ``FactorizedPropagator``: in the hyperbolic zone
  ``E(t, s) = M(t) N_k(t) Et(t, s) Q(t, s) N_k(s)^-1 M(s)^-1`` with the
  diagonal factor ``Et = exp(i int (D + F_{k-1}))`` and ``Q`` solving
  ``D_t Q = Rt Q``, ``Rt = Et^-1 R_k Et``, by a Peano-Baker series (or an ODE
  fallback).  For ``s < t_xi`` the pseudo-differential piece is spliced in at
  ``t_xi``.
"""
from dataclasses import dataclass, field

import numpy as np

from . import jets as J
from .errors import ZoneError
from .integrators import dop853, matrix_rhs
from .quadrature import PanelGrid, panel_edges
from .spectral import spectral_jets
from .symbols import boundary_time, log_weight


@dataclass
class Tolerances:
    rtol: float = 1e-10
    atol: float = 1e-12


def _batch(t, s, xi, n):
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    xi = np.asarray(xi, dtype=float)
    scalar = t.ndim == 0 and s.ndim == 0 and xi.ndim <= 1
    xi = xi.reshape(-1, n)
    P = max(t.size, s.size, xi.shape[0])
    t = np.broadcast_to(t.reshape(-1), (P,)).copy()
    s = np.broadcast_to(s.reshape(-1), (P,)).copy()
    xi = np.broadcast_to(xi, (P, n)).copy()
    return t, s, xi, scalar


def solve_direct(system, t, s, xi, rtol=1e-10, atol=1e-12, max_steps=500000):
    """E(t, s, xi) by adaptive DOP853, column by column (all columns at once)."""
    t, s, xi, scalar = _batch(t, s, xi, system.n)
    P, m = len(t), system.m

    def A_of(tau, idx):
        return system.A.values(tau, xi[idx])

    y0 = np.broadcast_to(np.eye(m, dtype=complex).reshape(-1), (P, m * m))
    nA = np.linalg.norm(A_of(s, np.arange(P)), ord=2, axis=(-2, -1))
    h0 = np.minimum(np.abs(t - s), 0.1 / np.maximum(nA, 1e-3))
    y, _ = dop853(matrix_rhs(A_of), s, t, y0, rtol, atol, h0=np.maximum(h0, 1e-8),
                  max_steps=max_steps)
    E = y.reshape(P, m, m)
    return E[0] if scalar else E


def trace_integral(system, t, s, xi, p=20):
    """int_s^t trace A(tau, xi) dtau by composite Lobatto panels."""
    grid = PanelGrid(panel_edges(s, t, rel=0.25), p)
    X = np.broadcast_to(np.asarray(xi, dtype=float), (grid.flat.size, system.n))
    tr = np.trace(system.A.values(grid.flat, X), axis1=-2, axis2=-1)
    return grid.integral(tr.reshape(grid.n_panels, grid.p)), grid.tail_estimate(
        tr.reshape(grid.n_panels, grid.p))


# ---------------------------------------------------------------------------
# factorised propagator


@dataclass
class QResult:
    Q: np.ndarray
    terms: int
    converged: bool
    error: float
    nodes: int


@dataclass
class _Setup:
    grid: PanelGrid
    lam: np.ndarray
    F: np.ndarray
    R: np.ndarray
    N: np.ndarray
    theta: np.ndarray


class FactorizedPropagator:
    """E = M N_k Et Q N_k^-1 M^-1 on Z_hyp(N_eff, nu), spliced with the pd-zone solve."""

    def __init__(self, hierarchy, system=None, p=20, pb_tol=1e-12, pb_cap=64, rel=0.25,
                 osc_rad=6.0, tol=None):
        self.h = hierarchy
        self.system = system if system is not None else getattr(hierarchy.source, "system", None)
        self.p, self.pb_tol, self.pb_cap = p, pb_tol, pb_cap
        self.rel, self.osc_rad = rel, osc_rad
        self.tol = tol or Tolerances()
        self.last = None

    @property
    def zone(self):
        return self.h.eff_zone

    def boundaries(self, xi):
        r = np.linalg.norm(np.atleast_2d(xi), axis=-1)
        return boundary_time(r, self.zone), boundary_time(r, self.zone, doubled=True)

    def _setup(self, t, s, xi):
        return self._setup_many(np.array([t]), np.array([s]), np.atleast_2d(xi))[0]

    def _setup_many(self, t, s, xi):
        """Panel grids and hierarchy data for many points with one hierarchy call."""
        xi = np.asarray(xi, dtype=float).reshape(len(t), -1)
        tx, ttx = self.boundaries(xi)
        lo = np.minimum(t, s)
        if np.any(lo < tx - 1e-12 * (1 + tx)):
            i = int(np.argmax(lo < tx - 1e-12 * (1 + tx)))
            raise ZoneError(f"factorisation needs t, s >= t_xi = {tx[i]:.6g} "
                            f"(got t={t[i]:g}, s={s[i]:g})")
        P = len(t)
        ends = self.h.jets(np.concatenate([s, t]), np.concatenate([xi, xi])).lam.value
        omega = np.maximum(np.ptp(ends[:P], axis=-1), np.ptp(ends[P:], axis=-1)) + 1e-300
        grids = [PanelGrid(panel_edges(s[i], t[i], breakpoints=[ttx[i]], rel=self.rel,
                                       max_len=self.osc_rad / omega[i]), self.p)
                 for i in range(P)]
        nodes = np.concatenate([g.flat for g in grids])
        X = np.repeat(xi, [g.flat.size for g in grids], axis=0)
        hj = self.h.jets(nodes, X)
        lam, F, R, N = hj.lam.value, hj.F.value, hj.R.value, hj.N.value
        out, k0 = [], 0
        for g in grids:
            sl = slice(k0, k0 + g.flat.size)
            k0 += g.flat.size
            Fd = np.diagonal(F[sl], axis1=-2, axis2=-1)
            theta = g.cumulative((lam[sl] + Fd).reshape(g.n_panels, g.p, -1)).reshape(g.flat.size, -1)
            out.append(_Setup(g, lam[sl], F[sl], R[sl], N[sl], theta))
        return out

    @staticmethod
    def _rotated(st):
        e, einv = np.exp(1j * st.theta), np.exp(-1j * st.theta)
        return einv[:, :, None] * st.R * e[:, None, :]

    def q_peano_baker(self, st, tol=None):
        tol = self.pb_tol if tol is None else tol
        g = st.grid
        m = st.R.shape[-1]
        G = (1j * self._rotated(st)).reshape(g.n_panels, g.p, m, m)
        term = np.broadcast_to(np.eye(m, dtype=complex), G.shape).copy()
        Q = term.copy()
        converged, n, tn = False, 0, np.inf
        for n in range(1, self.pb_cap + 1):
            term = g.cumulative(G @ term)
            Q += term
            tn = float(np.linalg.norm(term[-1, -1], 2))
            if tn <= tol * float(np.linalg.norm(Q[-1, -1], 2)):
                converged = True
                break
        quad = g.tail_estimate(G @ Q)
        return QResult(Q.reshape(-1, m, m), n, converged, tn + quad, g.flat.size)

    def q_ode(self, t, s, xi):
        """Q(t, s) from the ODE for (Q, theta) with theta' = lam + diag F."""
        xi = np.asarray(xi, dtype=float)
        m = self.h.m

        def rhs(tau, y, idx):
            hj = self.h.jets(tau, np.broadcast_to(xi, (tau.size, xi.size)))
            Q = y[:, :m * m].reshape(-1, m, m)
            th = y[:, m * m:]
            e, einv = np.exp(1j * th), np.exp(-1j * th)
            Rt = einv[:, :, None] * hj.R.value * e[:, None, :]
            dQ = 1j * Rt @ Q
            dth = hj.lam.value + np.diagonal(hj.F.value, axis1=-2, axis2=-1)
            return np.concatenate([dQ.reshape(len(tau), -1), dth], axis=1)

        y0 = np.concatenate([np.eye(m, dtype=complex).reshape(-1), np.zeros(m)])[None]
        lam0 = self.h.jets(np.array([s]), xi[None]).lam.value[0]
        h0 = 0.1 / max(1e-3, float(lam0.max() - lam0.min()))
        y, _ = dop853(rhs, np.array([s]), np.array([t]), y0, self.tol.rtol, self.tol.atol,
                      h0=min(h0, abs(t - s) or 1.0))
        return y[0, :m * m].reshape(m, m), y[0, m * m:]

    def hyperbolic(self, t, s, xi, parts=False):
        """Factorised E(t, s, xi) for t, s in Z_hyp(N_eff, nu)."""
        E, info = self.hyperbolic_many(np.array([float(t)]), np.array([float(s)]),
                                       np.atleast_2d(np.asarray(xi, dtype=float)))
        self.last = info[0]["q"]
        return (E[0], info[0]) if parts else E[0]

    def hyperbolic_many(self, t, s, xi):
        """Batched factorised propagator; returns ``(E, parts)`` per point."""
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        xi = np.asarray(xi, dtype=float).reshape(len(t), -1)
        setups = self._setup_many(t, s, xi)
        M, Minv = self.h.source.diagonaliser(np.concatenate([t, s]), np.concatenate([xi, xi]))
        P = len(t)
        E = np.empty((P, self.h.m, self.h.m), dtype=complex)
        parts = []
        for i, st in enumerate(setups):
            qr = self.q_peano_baker(st)
            if qr.converged:
                Qt, th = qr.Q[-1], st.theta[-1]
            else:
                Qt, th = self.q_ode(t[i], s[i], xi[i])
                qr = QResult(None, qr.terms, False, qr.error, qr.nodes)
            Ns_inv = np.linalg.inv(st.N[0])
            E[i] = M[i] @ st.N[-1] @ (np.exp(1j * th)[:, None] * Qt) @ Ns_inv @ Minv[P + i]
            parts.append(dict(M_t=M[i], N_t=st.N[-1], phase=th, Q=Qt, N_s=st.N[0],
                              Minv_s=Minv[P + i], q=qr))
        if P:
            self.last = parts[-1]["q"]
        return E, parts

    def __call__(self, t, s, xi, hyp_only=False):
        n = self.h.n
        t, s, xi, scalar = _batch(t, s, xi, n)
        out = np.empty((len(t), self.h.m, self.h.m), dtype=complex)
        tx, _ = self.boundaries(xi)
        eps = 1e-12 * (1 + tx)
        hyp = np.minimum(t, s) >= tx - eps
        if hyp_only and not hyp.all():
            i = int(np.argmin(hyp))
            raise ZoneError(f"point (t={t[i]:g}, s={s[i]:g}) reaches into Z_pd (t_xi={tx[i]:g})")
        if hyp.any():
            out[hyp] = self.hyperbolic_many(t[hyp], s[hyp], xi[hyp])[0]
        rest = np.nonzero(~hyp)[0]
        if len(rest):
            r = self.tol
            pd = rest[np.maximum(t[rest], s[rest]) <= tx[rest]]
            if len(pd):
                out[pd] = solve_direct(self.system, t[pd], s[pd], xi[pd], r.rtol, r.atol)
            fw = rest[(np.maximum(t[rest], s[rest]) > tx[rest]) & (s[rest] < t[rest])]
            bw = rest[(np.maximum(t[rest], s[rest]) > tx[rest]) & (s[rest] >= t[rest])]
            if len(fw):
                out[fw] = self.hyperbolic_many(t[fw], tx[fw], xi[fw])[0] @ solve_direct(
                    self.system, tx[fw], s[fw], xi[fw], r.rtol, r.atol)
            if len(bw):
                out[bw] = solve_direct(self.system, t[bw], tx[bw], xi[bw], r.rtol, r.atol) \
                    @ self.hyperbolic_many(tx[bw], s[bw], xi[bw])[0]
        return out[0] if scalar else out


@dataclass
class PropagatorHandle:
    """E(t, s, xi) with a selectable backend: ode-direct, factorized or pd-zone."""

    system: object
    backend: str = "ode-direct"
    hierarchy: object = None
    tol: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        if self.backend not in ("ode-direct", "factorized", "pd-zone"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.backend == "factorized":
            if self.hierarchy is None:
                from .diagonalizer import build_hierarchy
                self.hierarchy = build_hierarchy(self.system, k=2)
            self._fp = FactorizedPropagator(self.hierarchy, self.system, tol=self.tol)

    def eval(self, t, s, xi):
        if self.backend == "factorized":
            return self._fp(t, s, xi)
        if self.backend == "pd-zone":
            tb, sb, xb, _ = _batch(t, s, xi, self.system.n)
            tx = boundary_time(np.linalg.norm(xb, axis=-1), self.system.zone)
            if np.any(np.maximum(tb, sb) > tx * (1 + 1e-12) + 1e-12):
                raise ZoneError("pd-zone backend evaluated beyond t_xi")
        return solve_direct(self.system, t, s, xi, self.tol.rtol, self.tol.atol)

    __call__ = eval


# ---------------------------------------------------------------------------
# invariants


def cocycle_residual(prop, t, s, r, xi):
    E_ts, E_sr, E_tr = prop(t, s, xi), prop(s, r, xi), prop(t, r, xi)
    return np.linalg.norm(E_ts @ E_sr - E_tr, 2, axis=(-2, -1))


def liouville_residual(system, E, t, s, xi):
    ints = np.array([trace_integral(system, ti, si, xi_i)[0]
                     for ti, si, xi_i in zip(np.atleast_1d(t), np.atleast_1d(s), np.atleast_2d(xi))])
    return np.abs(np.linalg.det(E) - np.exp(1j * ints))


# ---------------------------------------------------------------------------
# phases


@dataclass
class PhaseTable:
    """phi_j(t, xi) = (1/t) int_0^t lam_j(tau, xi) dtau with xi-derivatives."""

    t: float
    xi: np.ndarray
    values: np.ndarray
    derivatives: dict
    error: float

    def integral(self):
        return self.values * self.t if self.t > 0 else np.zeros_like(self.values)


def phases(system, t, xi, alpha_max=0, p=20):
    """Phase table at one (t, xi); ``derivatives[alpha]`` holds d_xi^alpha phi_j."""
    xi = np.asarray(xi, dtype=float).reshape(system.n)
    sp = J.get_space(tuple(range(1, system.n + 1)), alpha_max)
    if t <= 0:
        lj = spectral_jets(system.A1.jet(np.array([0.0]), xi[None], sp)).lam
        c = lj.c[:, 0]
        err = 0.0
    else:
        grid = PanelGrid(panel_edges(0.0, t, rel=0.25), p)
        nodes = grid.flat
        lj = spectral_jets(system.A1.jet(nodes, np.broadcast_to(xi, (nodes.size, system.n)), sp)).lam
        K, m = sp.size, system.m
        f = np.moveaxis(lj.c, 0, 1).reshape(grid.n_panels, grid.p, K, m)
        c = grid.integral(f) / t
        err = grid.tail_estimate(f[..., 0, :]) / t
    jet = J.Jet(sp, c)
    derivs = {}
    from .symbols import multi_indices
    for a in multi_indices(system.n, alpha_max):
        derivs[a] = np.asarray(J.partial(jet, a)).real
    return PhaseTable(float(t), xi, derivs[(0,) * system.n], derivs, float(err))


# ---------------------------------------------------------------------------
# bound checks


def _fit_loglinear(x, y):
    """Least squares y = a + b x; returns (a, b)."""
    A = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[0]), float(coef[1])


def _fd_stencil(n, alpha, h):
    """Central-difference points and weights for d^alpha (tensor product)."""
    pts = [(np.zeros(n), 1.0)]
    for i, a in enumerate(alpha):
        if a == 0:
            continue
        w = {1: [(-1, -0.5), (1, 0.5)], 2: [(-1, 1.0), (0, -2.0), (1, 1.0)]}[a]
        new = []
        for x, c in pts:
            for off, wi in w:
                y = x.copy()
                y[i] += off * h
                new.append((y, c * wi / h ** a))
        pts = new
    return pts


def fd_derivatives(fun, xi, alpha_max, rel_step=1e-4):
    """d_xi^alpha fun(xi) for all |alpha| <= alpha_max (alpha <= 2 per axis)."""
    from .symbols import multi_indices
    xi = np.asarray(xi, dtype=float)
    h = rel_step * np.linalg.norm(xi)
    out = {}
    cache = {}
    for a in multi_indices(len(xi), alpha_max):
        if max(a, default=0) > 2:
            continue
        acc = 0.0
        for off, w in _fd_stencil(len(xi), a, h):
            key = tuple(np.round(off / h).astype(int))
            if key not in cache:
                cache[key] = fun(xi + off)
            acc = acc + w * cache[key]
        out[a] = acc
    return out


@dataclass
class PdZoneReport:
    xi_norms: list
    E_norms: list
    deriv_norms: dict
    C: float
    C_prime: float
    deriv_constants: dict
    deriv_slopes: dict
    violations: int

    def as_dict(self):
        return {"xi_norms": self.xi_norms, "E_norms": self.E_norms,
                "deriv_norms": {str(k): v for k, v in self.deriv_norms.items()},
                "C": self.C, "C_prime": self.C_prime,
                "deriv_constants": {str(k): v for k, v in self.deriv_constants.items()},
                "deriv_slopes": {str(k): v for k, v in self.deriv_slopes.items()},
                "violations": self.violations}


def pd_zone_bounds(system, zp, xi_grid, alpha_max=1, tol=None):
    """||E(t_xi, 0, xi)|| and its xi-derivatives against the pd-zone envelopes."""
    tol = tol or Tolerances()
    xi_grid = np.asarray(xi_grid, dtype=float).reshape(-1, system.n)
    r = np.linalg.norm(xi_grid, axis=-1)
    if np.any(r > zp.N * (1 + 1e-12)):
        raise ValueError("pd-zone grid must satisfy |xi| <= N")
    tx = boundary_time(r, zp)
    E = solve_direct(system, tx, 0.0, xi_grid, tol.rtol, tol.atol)
    En = np.linalg.norm(E, 2, axis=(-2, -1))
    L = log_weight(tx, zp.nu)
    if zp.nu > 0:
        a, b = _fit_loglinear(L, np.log(En))
        C_prime = max(0.0, b)
        C = float(np.max(En * np.exp(-C_prime * L)))
    else:
        C_prime = 0.0
        C = float(En.max())
    env0 = C * np.exp(C_prime * L)
    derivs, consts, slopes = {}, {}, {}
    viol = int(np.sum(En > 10 * env0))
    from .symbols import multi_indices
    keys = [a for a in multi_indices(system.n, alpha_max) if sum(a) > 0]
    vals = {a: [] for a in keys}
    for x, t_i in zip(xi_grid, tx):
        d = fd_derivatives(lambda y: solve_direct(system, t_i, 0.0, y, tol.rtol, tol.atol),
                           x, alpha_max)
        for a in keys:
            vals[a].append(float(np.linalg.norm(d[a], 2)))
    for a in keys:
        v = np.asarray(vals[a])
        k = sum(a)
        env = r ** (-k) * L ** (zp.nu * k) * np.exp(C_prime * L)
        consts[a] = float(np.max(v / env))
        good = v > 0
        slopes[a] = (_fit_loglinear(np.log(r[good]), np.log(v[good]))[1]
                     if good.sum() >= 2 else float("nan"))
        derivs[a] = v.tolist()
    return PdZoneReport(r.tolist(), En.tolist(), derivs, C, C_prime, consts, slopes, viol)


@dataclass
class EnergyReport:
    C_low: float
    C_high: float
    C_star: float
    witness_low: list
    witness_high: list
    by_horizon: dict
    monotone_growth: bool
    samples: int

    def as_dict(self):
        return {"C_low": self.C_low, "C_high": self.C_high, "C_star": self.C_star,
                "witness_low": self.witness_low, "witness_high": self.witness_high,
                "by_horizon": {f"{k:g}": v for k, v in self.by_horizon.items()},
                "monotone_growth": self.monotone_growth, "samples": self.samples}


def hyperbolic_samples(system, zp, count, horizons, rng, phase_budget=60.0, xi_range=(1e-2, 10.0)):
    """Random (t, s, xi) in Z_hyp with s <= t <= H, stratified over horizons."""
    horizons = sorted(horizons)
    per = count // len(horizons)
    T, S, X = [], [], []
    lo_prev = 0.0
    for H in horizons:
        k = per if H != horizons[-1] else count - per * (len(horizons) - 1)
        r = np.exp(rng.uniform(np.log(xi_range[0]), np.log(xi_range[1]), k)) * zp.N
        d = rng.standard_normal((k, system.n))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        xi = r[:, None] * d
        tx = boundary_time(r, zp)
        r_bad = tx >= H
        r[r_bad] = zp.N * 1.5 * log_weight(H, zp.nu) / (1 + lo_prev + 0.5 * (H - lo_prev))
        xi = r[:, None] * d
        tx = boundary_time(r, zp)
        lo = np.maximum(tx, lo_prev)
        t = lo + (H - lo) * rng.uniform(0, 1, k)
        speed = np.abs(np.linalg.eigvals(system.A1.values(t, xi))).max(axis=-1) + 1e-12
        span = np.minimum(t - tx, phase_budget / speed)
        s = t - span * rng.uniform(0, 1, k)
        T.append(t), S.append(s), X.append(xi)
        lo_prev = H
    return np.concatenate(T), np.concatenate(S), np.concatenate(X)


def regular_samples(system, zp, count, rng, phase_budget=150.0, xi_range=(1e-2, 10.0),
                    span=1e4):
    """Random (t, s, xi) with tilde t_xi <= s <= t, log-uniform |xi| and s - tilde t_xi.

    ``t - s`` is capped so the phase |lambda| (t - s) stays below
    ``phase_budget``; the direct oracle cost grows linearly with it.
    """
    r = np.exp(rng.uniform(np.log(xi_range[0]), np.log(xi_range[1]), count)) * zp.N
    d = rng.standard_normal((count, system.n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    xi = r[:, None] * d
    ttx = boundary_time(r, zp, doubled=True)
    s = ttx + np.exp(rng.uniform(0.0, np.log(span), count)) - 1.0
    speed = np.abs(np.linalg.eigvals(system.A1.values(s, xi))).max(axis=-1) + 1e-12
    t = s + np.minimum(phase_budget / speed, span) * rng.uniform(0, 1, count)
    return t, s, xi


def energy_two_sided(system, zp, count=10000, horizons=(1e1, 1e2, 1e3), seed=0,
                     phase_budget=60.0, tol=None, samples=None, growth_ratio=1.25):
    """Extremes of ||E(t, s, xi) V|| / ||V|| over Z_hyp samples (singular values)."""
    tol = tol or Tolerances()
    rng = np.random.default_rng(seed)
    if samples is None:
        samples = hyperbolic_samples(system, zp, count, horizons, rng, phase_budget)
    t, s, xi = samples
    E = solve_direct(system, t, s, xi, tol.rtol, tol.atol)
    sv = np.linalg.svd(E, compute_uv=False)
    hi, lo = sv[:, 0], sv[:, -1]
    by_h = {}
    for H in sorted(horizons):
        sel = t <= H * (1 + 1e-12)
        if sel.any():
            by_h[float(H)] = {"C_high": float(hi[sel].max()), "C_low": float(lo[sel].min())}
    ih, il = int(np.argmax(hi)), int(np.argmin(lo))
    highs = [v["C_high"] for v in by_h.values()]
    growth = bool(len(highs) > 1 and all(b > growth_ratio * a for a, b in zip(highs, highs[1:])))
    C_high, C_low = float(hi.max()), float(lo.min())
    return EnergyReport(C_low, C_high, max(C_high, 1.0 / C_low),
                        [float(t[il]), float(s[il]), xi[il].tolist()],
                        [float(t[ih]), float(s[ih]), xi[ih].tolist()], by_h, growth, len(t))


# ---------------------------------------------------------------------------
# representation of E(t, 0, xi)


@dataclass
class RepresentationBands:
    t: float
    xi: np.ndarray
    bands: np.ndarray
    phases: np.ndarray
    mode: str
    residual: float

    def reconstruct(self):
        return np.einsum("j,jab->ab", np.exp(1j * self.phases), self.bands)


def representation_bands(system, fp, t, xi, mode=None, E_ref=None):
    """Bands B_j with sum_j exp(i t |xi| phi_j(t, xi/|xi|)) B_j = E(t, 0, xi).

    In Z_reg(N_eff) the diagonal factor of the factorisation is split into
    its coordinate projections; in Z_pd and Z_osc every band is E / m times
    the conjugate phase.  ``residual`` is measured against ``E_ref``
    (default: the direct solver).
    """
    xi = np.asarray(xi, dtype=float)
    m = system.m
    tx, ttx = (float(v[0]) for v in fp.boundaries(xi))
    if mode is None:
        mode = "split" if t > ttx else "uniform"
    ph = phases(system, t, xi).integral()
    tol = fp.tol
    if mode == "uniform":
        E = fp(t, 0.0, xi) if t > tx else solve_direct(system, t, 0.0, xi, tol.rtol, tol.atol)
        bands = np.stack([E / m * np.exp(-1j * ph[j]) for j in range(m)])
    else:
        Ep = solve_direct(system, tx, 0.0, xi, tol.rtol, tol.atol)
        _, pr = fp.hyperbolic(t, tx, xi, parts=True)
        right = pr["Q"] @ np.linalg.inv(pr["N_s"]) @ pr["Minv_s"] @ Ep
        left = pr["M_t"] @ pr["N_t"]
        bands = np.stack([np.exp(1j * pr["phase"][j] - 1j * ph[j])
                          * np.outer(left[:, j], right[j]) for j in range(m)])
    if E_ref is None:
        E_ref = solve_direct(system, t, 0.0, xi, tol.rtol, tol.atol)
    rb = RepresentationBands(float(t), xi, bands, ph, mode, 0.0)
    rb.residual = float(np.linalg.norm(rb.reconstruct() - E_ref, 2))
    return rb


@dataclass
class EnvelopeFit:
    alpha: tuple
    slope: float
    constant: float
    values: list
    xi_norms: list
    passed: bool

    def as_dict(self):
        return {"alpha": list(self.alpha), "slope": self.slope, "constant": self.constant,
                "values": self.values, "xi_norms": self.xi_norms, "passed": self.passed}


def band_envelopes(system, fp, t, xi_list, alpha_max=2, slope_slack=0.1):
    """Finite-difference d_xi^alpha B_j in Z_reg and log-log slopes in |xi|."""
    from .symbols import multi_indices
    xi_list = np.asarray(xi_list, dtype=float).reshape(-1, system.n)
    r = np.linalg.norm(xi_list, axis=-1)
    zp = fp.zone
    L = log_weight(t, 1.0)
    keys = [a for a in multi_indices(system.n, alpha_max) if sum(a) > 0]
    vals = {a: [] for a in keys}
    for x in xi_list:
        d = fd_derivatives(lambda y: representation_bands(system, fp, t, y, mode="split",
                                                          E_ref=np.zeros((system.m,) * 2)).bands,
                           x, alpha_max)
        for a in keys:
            vals[a].append(float(max(np.linalg.norm(b, 2) for b in d[a])))
    fits = []
    for a in keys:
        v = np.asarray(vals[a])
        k = sum(a)
        slope = _fit_loglinear(np.log(r), np.log(v))[1]
        env = r ** (-k) * L ** ((2 * zp.nu + 1) * k)
        fits.append(EnvelopeFit(a, slope, float(np.max(v / env)), v.tolist(), r.tolist(),
                                bool(slope >= -k - slope_slack)))
    return fits


def qk_derivative_bounds(fp, xi_list, t=None, alpha_max=1, zone="reg", slope_slack=0.1,
                         factor=10.0):
    """Finite-difference xi-derivatives of Q_k against the zone envelopes.

    ``zone="reg"``: Q_k(t, tilde t_xi, xi) at fixed ``t``, envelope
    ``|xi|^-|a| log(e + 1/|xi|)^|a|``.  ``zone="osc"``: Q_k(t, t_xi, xi) at
    the midpoint of the oscillating interval, envelope
    ``|xi|^-|a| log(e + t)^((1 + 2 nu)|a|) exp(C' log(e + t_xi)^nu)`` with
    (C, C') fitted on the larger half of the frequencies and checked on all.
    In both zones the constants come from the larger half and the log-log slope
    from the smaller half.
    """
    from .symbols import multi_indices
    h = fp.h
    xi_list = np.asarray(xi_list, dtype=float).reshape(-1, h.n)
    r = np.linalg.norm(xi_list, axis=-1)
    tx, ttx = fp.boundaries(xi_list)
    nu = fp.zone.nu
    keys = [a for a in multi_indices(h.n, alpha_max) if sum(a) > 0]
    vals = {a: [] for a in keys}
    times = []
    for x, a0, b0 in zip(xi_list, tx, ttx):
        if zone == "reg":
            s0, t0 = b0, (t if t is not None else 10 * (1 + b0))
        else:
            s0, t0 = a0, 0.5 * (a0 + b0)
        times.append((t0, s0))

        def q(y, t0=t0, s0=s0):
            # lower endpoint follows the zone boundary of the perturbed frequency
            b = fp.boundaries(y.reshape(1, -1))[1 if zone == "reg" else 0][0]
            st = fp._setup(t0, b, y)
            return fp.q_peano_baker(st).Q[-1]
        d = fd_derivatives(q, x, alpha_max)
        for a in keys:
            vals[a].append(float(np.linalg.norm(d[a], 2)))
    times = np.asarray(times)
    out = {}
    for a in keys:
        v = np.asarray(vals[a])
        k = sum(a)
        good = v > 0
        big = r >= np.median(r)
        if zone == "reg":
            env = r ** (-k) * np.log(np.e + 1 / r) ** k
            C, Cp = float(np.max(v[big] / env[big])), 0.0
            ratio = v / (C * env) if C > 0 else np.zeros_like(v)
        else:
            base = r ** (-k) * log_weight(times[:, 0], 1.0) ** ((1 + 2 * nu) * k)
            Lx = log_weight(times[:, 1], nu)
            sel = big & good
            if sel.sum() >= 2 and nu > 0:
                a_, Cp = _fit_loglinear(Lx[sel], np.log(v[sel] / base[sel]))
                Cp = max(0.0, Cp)
            else:
                Cp = 0.0
            C = float(np.max(v[big] / (base[big] * np.exp(Cp * Lx[big])))) if big.any() else 0.0
            ratio = v / (C * base * np.exp(Cp * Lx)) if C > 0 else np.zeros_like(v)
        # the bound limits growth as |xi| -> 0, so the slope is read off the small half
        small = good & (r <= np.median(r))
        slope = (_fit_loglinear(np.log(r[small]), np.log(v[small]))[1]
                 if small.sum() >= 2 else float("nan"))
        out[str(a)] = {"values": v.tolist(), "slope": slope, "C": C, "C_prime": Cp,
                       "max_ratio": float(ratio.max()) if ratio.size else 0.0,
                       "slope_ok": bool(not np.isfinite(slope) or slope >= -k - slope_slack),
                       "envelope_ok": bool(ratio.max() <= factor) if ratio.size else True}
    return {"zone": zone, "xi_norms": r.tolist(), "times": times.tolist(), "alphas": out}
