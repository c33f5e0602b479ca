"""Step-k diagonalisation of D_t - D - R_0 in the hyperbolic zone.

Conventions (``D_t = -i d/dt``)::

    R_0     = M^-1 (A - A1) M + (D_t M^-1) M
    B^(0)   = R_0
    F^(j-1) = diag B^(j-1)
    N^(j)_ab = -B^(j-1)_ab / (lam_a - lam_b)        (a != b, zero diagonal)
    N_k     = I + N^(1) + ... + N^(k),   F_{k-1} = F^(0) + ... + F^(k-1)
    B^(k)   = -D_t N_k - [N_k, D] + R_0 N_k - N_k F_{k-1}
    R_k     = N_k^-1 B^(k)

so that ``(D_t - D - R_0) N_k = N_k (D_t - D - F_{k-1} - R_k)`` as symbols
of operators.  The off-diagonal choice cancels ``B^(k-1) - [N^(k), D] -
F^(k-1)`` exactly, which leaves the cheaper recursion

    B^(k) = -D_t N^(k) + R_0 N^(k) - (N_{k-1} - I) F^(k-1) - N^(k) F_{k-1}.

Every level is a jet, so all time and frequency derivatives are exact.
"""
from dataclasses import dataclass, field

import numpy as np

from . import jets as J
from .errors import StrictHyperbolicityError, ZoneConstantError
from .expr import Expression
from .spectral import reference_axes, spectral_jets
from .symbols import (SymbolClassSpec, TimeFrequencySymbol, ZoneParams, boundary_time,
                      check_symbol_class, log_weight, sphere_directions, _as_batch)


def _dt(x):
    return -1j * J.derivative(x, 0)


def _diag_part(x):
    m = x.shape[-1]
    return J.Jet(x.space, x.c * np.eye(m))


def _raised(space, extra):
    active = tuple(sorted(set(space.active) | {0}))
    return J.get_space(active, space.degree + extra)


class SystemSource:
    """Spectral data of a :class:`~disphyp.system.HyperbolicSystem`.

    Branch axes are fixed per frequency at the zone boundary of ``zone``.
    """

    def __init__(self, system, zone=None):
        self.system = system
        self.m, self.n = system.m, system.n
        self.zone = zone or system.zone

    def axes(self, xi):
        r = np.linalg.norm(xi, axis=-1)
        return reference_axes(self.system, xi, boundary_time(r, self.zone))

    def base(self, t, xi, space):
        t, xi = _as_batch(t, xi)
        sys = self.system
        ax = self.axes(xi.reshape(-1, self.n)).reshape(t.shape + (self.m,))
        sj = spectral_jets(sys.A1.jet(t, xi, space), axes=ax)
        B = sys.A.jet(t, xi, space) - sys.A1.jet(t, xi, space)
        R0 = sj.Minv @ B @ sj.M - sj.Minv @ _dt(sj.M)
        return sj.lam, R0

    def diagonaliser(self, t, xi):
        """Values of M and M^-1 with the same branch axes as :meth:`base`."""
        t, xi = _as_batch(t, xi)
        ax = self.axes(xi.reshape(-1, self.n)).reshape(t.shape + (self.m,))
        sj = spectral_jets(self.system.A1.jet(t, xi, J.get_space((), 0)), axes=ax)
        return sj.M.value, sj.Minv.value


class ExpressionSource:
    """Prescribed roots and remainder from expressions (for model problems)."""

    def __init__(self, roots, R0_entries, n, zone=None):
        self.n = int(n)
        self.m = len(roots)
        self.roots = [Expression(r, n) for r in roots]
        self.R0 = [[Expression(x, n) for x in row] for row in R0_entries]
        self.zone = zone or ZoneParams()

    def base(self, t, xi, space):
        t, xi = _as_batch(t, xi)
        shape = t.shape
        lam = np.zeros((space.size,) + shape + (self.m,))
        R0 = np.zeros((space.size,) + shape + (self.m, self.m), dtype=complex)
        for a in range(self.m):
            v = self.roots[a](t, xi, space)
            lam[..., a] = J._broadcast(v, shape).real if isinstance(v, J.Jet) else 0.0
            if not isinstance(v, J.Jet):
                lam[0, ..., a] = np.real(v)
            for b in range(self.m):
                v = self.R0[a][b](t, xi, space)
                if isinstance(v, J.Jet):
                    R0[..., a, b] = J._broadcast(v, shape)
                else:
                    R0[0, ..., a, b] = v
        return J.Jet(space, lam), J.Jet(space, R0)

    def diagonaliser(self, t, xi):
        t, _ = _as_batch(t, xi)
        eye = np.broadcast_to(np.eye(self.m), t.shape + (self.m, self.m)).astype(complex)
        return eye, eye.copy()


@dataclass
class HierarchyJets:
    k: int
    lam: J.Jet
    R0: J.Jet
    N_levels: list
    F_levels: list
    B_levels: list
    N: J.Jet
    F: J.Jet
    R: J.Jet

    @property
    def D(self):
        m = self.lam.shape[-1]
        return J.Jet(self.lam.space, self.lam.c[..., None] * np.eye(m))


def hierarchy_jets(source, t, xi, space, k):
    """All levels up to ``k`` as jets over ``space`` (time derivatives handled internally)."""
    sp = _raised(space, k + 1)
    lam, R0 = source.base(t, xi, sp)
    m = lam.shape[-1]
    gaps = lam.value[..., :, None] - lam.value[..., None, :]
    off = ~np.eye(m, dtype=bool)
    if m > 1 and np.any(np.abs(gaps[..., off]) == 0):
        raise StrictHyperbolicityError("zero root gap in hierarchy construction")
    # 1 / (lam_a - lam_b) off the diagonal, 0 on it
    lc = lam.c
    diff = J.Jet(lam.space, lc[..., :, None] - lc[..., None, :] + np.eye(m))
    inv_gap = J.Jet(lam.space, J.reciprocal(diff).c * off)
    eye = np.eye(m)
    B = R0
    N = J.constant(sp, np.broadcast_to(eye, R0.shape).astype(complex))
    F = J.constant(sp, np.zeros(R0.shape, dtype=complex))
    Ns, Fs, Bs = [], [], [B]
    for _ in range(k):
        Fj = _diag_part(B)
        Nj = -(B * inv_gap)
        Nj = J.Jet(Nj.space, Nj.c * off)
        F_new = F + Fj
        B = -_dt(Nj) + R0 @ Nj - (N - eye) @ Fj - Nj @ F_new
        N = N + Nj
        F = F_new
        Ns.append(Nj)
        Fs.append(Fj)
        Bs.append(B)
    R = J.matinv(N) @ B

    def pr(x):
        return J.project(x, space)

    return HierarchyJets(k=k, lam=pr(lam), R0=pr(R0), N_levels=[pr(x) for x in Ns],
                         F_levels=[pr(x) for x in Fs], B_levels=[pr(x) for x in Bs],
                         N=pr(N), F=pr(F), R=pr(R))


def default_level(n, gamma=2):
    """Smallest level feeding the dispersive estimates: max(1, floor((n-1)/gamma) + 2)."""
    return max(1, (n - 1) // gamma + 2)


def boundary_probe(zone, n, count=256, t_max=1e4):
    """``count`` points on the curve (1 + t)|xi| = N log(e + t)^nu."""
    dirs = sphere_directions(n, 8 if n > 1 else 2)
    nt = max(1, count // len(dirs))
    tt = np.concatenate([[0.0], np.geomspace(1e-2, t_max, nt - 1)])
    r = zone.N * log_weight(tt, zone.nu) / (1 + tt)
    xi = (r[:, None, None] * dirs[None]).reshape(-1, n)
    return np.repeat(tt, len(dirs)), xi


@dataclass
class DiagonalisationHierarchy:
    """Built hierarchy of level ``k`` on Z_hyp(N_eff, nu)."""

    source: object
    k: int
    zone: ZoneParams
    N_eff: float
    probe_norm: float
    history: list = field(default_factory=list)

    @property
    def m(self):
        return self.source.m

    @property
    def n(self):
        return self.source.n

    @property
    def eff_zone(self):
        return self.zone.with_N(self.N_eff)

    def jets(self, t, xi, space=None, k=None):
        space = space or J.get_space((), 0)
        return hierarchy_jets(self.source, t, xi, space, self.k if k is None else k)

    def evaluate(self, t, xi):
        h = self.jets(t, xi)
        return {"lam": h.lam.value, "R0": h.R0.value, "N": h.N.value, "F": h.F.value,
                "R": h.R.value, "N_levels": [x.value for x in h.N_levels],
                "F_levels": [x.value for x in h.F_levels],
                "B_levels": [x.value for x in h.B_levels]}

    def symbol(self, what="R", level=None):
        return HierarchySymbol(self, what, level)

    def to_config(self):
        return {"k": self.k, "N": self.zone.N, "nu": self.zone.nu, "N_eff": self.N_eff,
                "probe_norm": self.probe_norm, "history": self.history}


class HierarchySymbol(TimeFrequencySymbol):
    """One field of a hierarchy (``R``, ``N``, ``F``, ``R0``, ``F_minus_F0``) as a symbol."""

    backend = "exact-expression"

    def __init__(self, h, what, level=None):
        super().__init__(h.m, h.n, (16, 16))
        self.h, self.what, self.level = h, what, level

    def jet(self, t, xi, space):
        hj = self.h.jets(t, xi, space, k=self.level)
        if self.what == "F_minus_F0":
            return hj.F - hj.F_levels[0]
        return getattr(hj, self.what)


def initial_remainder(system, zone=None):
    """R_0 of a system as an evaluatable symbol."""
    h = DiagonalisationHierarchy(SystemSource(system, zone), 0, zone or system.zone,
                                 (zone or system.zone).N, 0.0)
    return HierarchySymbol(h, "R0", 0)


def _probe_norm(source, zone, k, count):
    tt, xi = boundary_probe(zone, source.n, count)
    hj = hierarchy_jets(source, tt, xi, J.get_space((), 0), k)
    d = hj.N.value - np.eye(source.m)
    return float(np.linalg.svd(d, compute_uv=False)[..., 0].max())


def build_hierarchy(source, k=None, zone=None, ceiling_factor=2.0 ** 16, probe=256, bound=0.5,
                    enlarge=True):
    """Build levels 1..k, doubling N until ||N_k - I|| <= bound on the boundary probe.

    With ``enlarge=False`` the zone constant is kept and the probe norm is
    only recorded.
    """
    if not hasattr(source, "base"):
        source = SystemSource(source, zone)
    zone = zone or source.zone
    k = default_level(source.n) if k is None else int(k)
    if k < 1:
        raise ValueError("hierarchy level must be >= 1")
    N = zone.N
    history = []
    while True:
        zp = zone.with_N(N)
        if isinstance(source, SystemSource):
            source = SystemSource(source.system, zp)
        norm = _probe_norm(source, zp, k, probe)
        history.append([N, norm])
        if norm <= bound or not enlarge:
            break
        N *= 2.0
        if N > ceiling_factor * zone.N:
            raise ZoneConstantError(
                f"||N_k - I|| = {norm:.3g} > {bound} even at N = {N / 2:g}")
    return DiagonalisationHierarchy(source, k, zone, N, norm, history)


@dataclass
class IdentityReport:
    max_residual: float
    max_relative: float
    scheme_residual: float
    witness: list
    passed: bool
    tol: float

    def as_dict(self):
        return {"max_residual": self.max_residual, "max_relative": self.max_relative,
                "scheme_residual": self.scheme_residual, "witness": self.witness,
                "passed": self.passed, "tol": self.tol}


def verify_operator_identity(h, t, xi, tol=1e-8, chunk=1024):
    """Residual of (D_t - D - R_0) N_k - N_k (D_t - D - F_{k-1} - R_k) on a grid.

    The left composition is expanded with the exact time derivative of
    ``N_k``; ``R_k`` comes from the recursion, so the check compares two
    independent routes to the same remainder.  Also returns the worst
    residual of the per-level cancellation ``B^(j-1) - [N^(j), D] - F^(j-1)``.
    """
    t, xi = _as_batch(t, xi)
    t = t.reshape(-1)
    xi = xi.reshape(len(t), -1)
    sp = J.get_space((0,), 1)
    worst, worst_rel, scheme, wit = 0.0, 0.0, 0.0, None
    for s in range(0, len(t), chunk):
        tt, xx = t[s:s + chunk], xi[s:s + chunk]
        hj = h.jets(tt, xx, sp)
        lam = hj.lam.value
        D = lam[..., None] * np.eye(h.m)
        N, R0, F, R = hj.N.value, hj.R0.value, hj.F.value, hj.R.value
        dN = (-1j * J.derivative(hj.N, 0)).value
        lhs = dN - D @ N - R0 @ N
        rhs = -N @ D - N @ F - N @ R
        res = np.linalg.norm(lhs - rhs, axis=(-2, -1))
        scale = np.maximum.reduce([np.linalg.norm(D @ N, axis=(-2, -1)),
                                   np.linalg.norm(R0 @ N, axis=(-2, -1)),
                                   np.linalg.norm(N @ R, axis=(-2, -1)),
                                   np.ones(len(tt))])
        rel = res / scale
        i = int(np.argmax(rel))
        if rel[i] > worst_rel:
            worst_rel = float(rel[i])
            wit = [float(tt[i]), xx[i].tolist()]
        worst = max(worst, float(res.max()))
        for j in range(h.k):
            Bp, Nj, Fj = (hj.B_levels[j].value, hj.N_levels[j].value, hj.F_levels[j].value)
            comm = Nj @ D - D @ Nj
            r = np.linalg.norm(Bp - comm - Fj, axis=(-2, -1))
            sc = np.maximum(np.linalg.norm(Bp, axis=(-2, -1)), 1e-300)
            scheme = max(scheme, float((r / sc).max()))
    return IdentityReport(worst, worst_rel, scheme, wit, bool(worst_rel <= tol), tol)


def check_remainder_class(h, zone, t, xi, level=None, ceiling=1e6):
    """Class constants of R_k in S{-k, k+1} (budgets 1, 1) on a grid."""
    k = h.k if level is None else level
    spec = SymbolClassSpec(-k, k + 1, 1, 1)
    return check_symbol_class(h.symbol("R", k), spec, zone, (t, xi), ceiling=ceiling)
