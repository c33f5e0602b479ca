"""Characteristic roots, eigenprojections and the diagonaliser of A1.

Eigenvalues are continued as Taylor jets by a chord-Newton iteration on the
bordered eigenproblem, projections come from the product formula
``P_j = prod_{i != j} (A1 - lambda_i) / (lambda_j - lambda_i)`` and the
columns of the diagonaliser are ``v_j = P_j e / |P_j e|`` for a fixed
coordinate axis ``e`` per root.  Because every step is jet arithmetic, time
and frequency derivatives of all spectral data are exact.
"""
from dataclasses import dataclass, field, asdict

import numpy as np

from . import jets as J
from .errors import ConditioningError, HyperbolicityError, StrictHyperbolicityError
from .quadrature import PanelGrid, panel_edges
from .symbols import (SymbolClassSpec, boundary_time, check_symbol_class,
                      log_weight, sphere_directions, symbol_grid)

IMAG_TOL = 1e-8
GAP_TOL = 1e-10
COND_MAX = 1e8


@dataclass
class SpectralDecomposition:
    roots: np.ndarray
    projections: np.ndarray
    M: np.ndarray
    Minv: np.ndarray
    D: np.ndarray
    H: np.ndarray
    gap: float
    axes: np.ndarray


@dataclass
class SpectralJets:
    """Jets of roots ``lam (..., m)``, projections ``(..., m, m, m)`` (root axis
    third from last) and the diagonaliser with its inverse."""

    lam: J.Jet
    proj: J.Jet
    M: J.Jet
    Minv: J.Jet
    axes: np.ndarray


def _flat(jet):
    shape = jet.shape[:-2]
    K = jet.c.shape[0]
    m = jet.shape[-1]
    return J.Jet(jet.space, jet.c.reshape((K, -1, m, m))), shape


def base_roots(A0, where=None):
    """Sorted real roots and eigenvectors of a batch ``(P, m, m)`` with checks."""
    w, V = np.linalg.eig(A0)
    scale = np.maximum(np.linalg.norm(A0, axis=(-2, -1)), 1e-300)
    im = np.abs(w.imag).max(axis=-1)
    bad = im > IMAG_TOL * scale
    if np.any(bad):
        i = int(np.argmax(im / scale))
        raise HyperbolicityError(
            f"complex characteristic roots (|Im| = {im[i]:.3e}, |A1| = {scale[i]:.3e})"
            + (f" at {where(i)}" if where else ""))
    order = np.argsort(w.real, axis=-1)
    lam = np.take_along_axis(w.real, order, axis=-1)
    V = np.take_along_axis(V, order[:, None, :], axis=-1)
    if lam.shape[-1] > 1:
        gap = np.diff(lam, axis=-1).min(axis=-1)
        badg = gap < GAP_TOL * scale
        if np.any(badg):
            i = int(np.argmax(badg))
            raise StrictHyperbolicityError(
                f"characteristic roots collide (gap {gap[i]:.3e})"
                + (f" at {where(i)}" if where else ""))
    return lam, V


def _root_jets(A, lam0, V0):
    """Chord-Newton continuation of each simple root as a jet."""
    sp = A.space
    P, m = lam0.shape
    eye = np.eye(m)
    lams = []
    for j in range(m):
        v0 = V0[:, :, j]
        ell = v0 / np.sum(np.abs(v0) ** 2, axis=-1, keepdims=True)
        Jb = np.zeros((P, m + 1, m + 1), dtype=complex)
        Jb[:, :m, :m] = A.value - lam0[:, j, None, None] * eye
        Jb[:, :m, m] = -v0
        Jb[:, m, :m] = np.conj(ell)
        Jinv = np.linalg.inv(Jb)
        v = J.constant(sp, v0.astype(complex))
        lam = J.constant(sp, lam0[:, j].astype(complex))
        for _ in range(sp.degree + 1):
            Av = J.Jet(sp, sp.matmul(A.c, v.c[..., None])[..., 0])
            r = Av - J.Jet(sp, sp.mul(lam.c[..., None], v.c))
            s = J.Jet(sp, np.sum(np.conj(ell)[None] * v.c, axis=-1))
            s.c[0] -= 1.0
            rhs = np.concatenate([r.c, s.c[..., None]], axis=-1)
            delta = -np.matmul(Jinv[None], rhs[..., None])[..., 0]
            v = J.Jet(sp, v.c + delta[..., :m])
            lam = J.Jet(sp, lam.c + delta[..., m])
        lams.append(lam.c)
    # roots are real functions of real variables, so their coefficients are real
    return J.Jet(sp, np.stack(lams, axis=-1).real)


def root_jets(A1, where=None):
    """Sorted characteristic roots of a jet-valued ``A1 (..., m, m)`` as a real jet."""
    A, shape = _flat(A1)
    lam0, V0 = base_roots(A.value, where)
    lam = _root_jets(A, lam0, V0)
    return J.Jet(A.space, lam.c.reshape((lam.c.shape[0],) + shape + lam.shape[-1:]))


def spectral_jets(A1, axes=None, where=None):
    """Spectral jets of a jet-valued principal symbol ``A1 (..., m, m)``.

    ``axes`` (shape ``(..., m)``) fixes the coordinate axis used for each
    eigenvector column; by default the axis maximising ``|P_j e_i|`` at the
    base point is taken.
    """
    A, shape = _flat(A1)
    sp = A.space
    K, P, m, _ = A.c.shape
    lam0, V0 = base_roots(A.value, where)
    lam = _root_jets(A, lam0, V0)
    eye = np.eye(m)
    projs = []
    for j in range(m):
        Pj = None
        for i in range(m):
            if i == j:
                continue
            li = lam[:, i]
            num = A - J.Jet(sp, li.c[..., None, None] * eye)
            den = J.reciprocal(lam[:, j] - li)
            term = J.Jet(sp, sp.mul(num.c, den.c[..., None, None]))
            Pj = term if Pj is None else Pj @ term
        if Pj is None:
            Pj = J.constant(sp, np.broadcast_to(eye, (P, m, m)).astype(complex))
        projs.append(Pj.c)
    proj = J.Jet(sp, np.stack(projs, axis=-3))
    if axes is None:
        colnorm = np.linalg.norm(proj.value, axis=-2)
        axes = np.argmax(colnorm, axis=-1)
    else:
        axes = np.asarray(axes, dtype=int).reshape(P, m)
    cols = []
    idx = np.arange(P)
    for j in range(m):
        # advanced indices land first: (P, K, m) -> (K, P, m)
        col = np.moveaxis(proj.c[:, idx, j, :, axes[:, j]], 0, 1)
        colj = J.Jet(sp, col)
        nrm = J.sqrt(J.Jet(sp, np.sum(sp.mul(np.conj(colj.c), colj.c), axis=-1)))
        cols.append(J.Jet(sp, sp.mul(colj.c, J.reciprocal(nrm).c[..., None])).c)
    Mc = np.stack(cols, axis=-1)
    M = J.Jet(sp, Mc)
    cond = np.linalg.cond(M.value)
    if np.any(cond > COND_MAX):
        i = int(np.argmax(cond))
        raise ConditioningError(f"diagonaliser condition number {cond[i]:.3e} exceeds {COND_MAX:g}"
                                + (f" at {where(i)}" if where else ""))
    Minv = J.matinv(M)

    def back(x, tail):
        return J.Jet(sp, x.c.reshape((K,) + shape + tail))

    return SpectralJets(lam=back(lam, (m,)), proj=back(proj, (m, m, m)),
                        M=back(M, (m, m)), Minv=back(Minv, (m, m)),
                        axes=axes.reshape(shape + (m,)))


def decompose(A1, continuity_ref=None, axes=None):
    """Spectral decomposition of a single principal-symbol matrix."""
    A1 = np.asarray(A1, dtype=complex)
    sp = J.get_space((), 0)
    if continuity_ref is not None and axes is None:
        axes = continuity_ref.axes
    ax = None if axes is None else np.asarray(axes)[None]
    sj = spectral_jets(J.Jet(sp, A1[None, None]), axes=ax)
    lam = np.real(sj.lam.value[0])
    proj = sj.proj.value[0]
    M = sj.M.value[0].copy()
    if continuity_ref is not None:
        for j in range(M.shape[0]):
            if np.real(np.vdot(continuity_ref.M[:, j], M[:, j])) < 0:
                M[:, j] = -M[:, j]
    Minv = np.linalg.inv(M)
    H = sum(p.conj().T @ p for p in proj)
    gap = float(np.min(np.diff(lam))) if len(lam) > 1 else np.inf
    return SpectralDecomposition(roots=lam, projections=proj, M=M, Minv=Minv,
                                 D=np.diag(lam), H=H, gap=gap, axes=sj.axes[0])


# ---------------------------------------------------------------------------
# system-level helpers


def reference_axes(system, xi, t_ref=None):
    """Branch axes per frequency, chosen at the zone boundary (or ``t_ref``)."""
    xi = np.asarray(xi, dtype=float).reshape(-1, system.n)
    if t_ref is None:
        t_ref = boundary_time(np.linalg.norm(xi, axis=-1), system.zone)
    t_ref = np.broadcast_to(np.asarray(t_ref, dtype=float), xi.shape[:1])
    A0 = system.A1.values(t_ref, xi)
    return spectral_jets(J.Jet(J.get_space((), 0), A0[None])).axes


def system_spectral(system, t, xi, space, axes=None):
    A1 = system.A1.jet(t, xi, space)
    return spectral_jets(A1, axes=axes)


def compute_F0(system, t, xi, axes=None):
    """diag(M^-1 (A - A1) M - M^-1 D_t M) with D_t = -i d/dt (exact jets)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    xi = np.asarray(xi, dtype=float).reshape(-1, system.n)
    t, xi = np.broadcast_arrays(t[:, None], xi)
    t = t[:, 0]
    sp = J.get_space((0,), 1)
    sj = system_spectral(system, t, xi, sp, axes)
    B = system.A.jet(t, xi, sp) - system.A1.jet(t, xi, sp)
    M, Minv = sj.M.truncate(0).value, sj.Minv.truncate(0).value
    dM = -1j * J.derivative(sj.M, 0).value
    F = Minv @ B.value @ M - Minv @ dM
    return np.diagonal(F, axis1=-2, axis2=-1)


# ---------------------------------------------------------------------------
# assumption checks


@dataclass
class AssumptionConfig:
    n_dirs: int = 8
    mags: tuple = tuple(np.round(np.logspace(-2, 1, 10), 12))
    class_times: int = 16
    late_times: tuple = (1e2, 1e4, 12)
    horizons: tuple = (1e2, 1e3, 1e4)
    pd_fracs: tuple = (1e-3, 1e-2, 0.1, 0.3, 0.6, 0.99)
    pd_times: int = 24
    class_ceiling: float = 1e3
    a3_ceiling: float = 50.0
    growth_tol: float = 1.25
    a4_floor: float = -1e-8
    gamma_ceiling: float = 50.0
    panel_nodes: int = 16


@dataclass
class AssumptionReport:
    system: str
    N: float
    nu: float
    strip_c: float
    dissipation_c: float
    a1_class_constants: dict
    a1_pass: bool
    a2_margin: float
    a2_max_imag: float
    a2_pass: bool
    a3_sup_by_horizon: dict
    a3_sup: float
    a3_witness: list
    a3_pass: bool
    a4_min_eig: float
    a4_gamma_constant_by_horizon: dict
    a4_gamma_required_constant: float
    a4_pass: bool
    passed: bool = field(default=False)

    def as_dict(self):
        return _clean(asdict(self))


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else str(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x


def _freq_grid(system, cfg):
    N = system.zone.N
    dirs = sphere_directions(system.n, cfg.n_dirs)
    mags = N * np.asarray(cfg.mags)
    return (mags[:, None, None] * dirs[None]).reshape(-1, system.n)


def _growth_ok(by_h, cfg, ceiling):
    hs = sorted(by_h)
    last, prev = by_h[hs[-1]], by_h[hs[-2]] if len(hs) > 1 else by_h[hs[-1]]
    return bool(np.isfinite(last) and last <= ceiling
                and last <= cfg.growth_tol * prev + 1e-9)


def check_assumptions(system, zp=None, cfg=None):
    """Numerical verdicts on the four structural assumptions."""
    zp = zp or system.zone
    cfg = cfg or AssumptionConfig()
    if zp != system.zone:
        system = system.with_zone(zp)
    n = system.n
    # (A1): class membership and the strip of imaginary parts
    g_t, g_xi = symbol_grid(n, zp, n_times=cfg.class_times, per_shell=4, shells=10,
                            n_dirs=min(cfg.n_dirs, 4))
    rep = check_symbol_class(system.A, SymbolClassSpec(1, 0, 1, 1), zp, (g_t, g_xi),
                             ceiling=cfg.class_ceiling)
    r = np.linalg.norm(g_xi, axis=-1)
    hyp = g_t >= boundary_time(r, zp)
    ev = np.linalg.eigvals(system.A.values(g_t[hyp], g_xi[hyp]))
    im = np.abs(ev.imag).max(axis=-1)
    strip_c = float(im.max()) if im.size else 0.0
    diss_c = float(max(0.0, (im / r[hyp]).max())) if im.size else 0.0
    a1_pass = bool(rep.passed and np.isfinite(strip_c))
    # (A2): late-time strict hyperbolicity margin on the unit sphere
    lt = np.geomspace(cfg.late_times[0], cfg.late_times[1], int(cfg.late_times[2]))
    dirs = sphere_directions(n, max(cfg.n_dirs, 2))
    tt = np.repeat(lt, len(dirs))
    xx = np.tile(dirs, (len(lt), 1))
    A1v = system.A1.values(tt, xx)
    w = np.linalg.eigvals(A1v)
    scale = np.linalg.norm(A1v, axis=(-2, -1))
    a2_imag = float((np.abs(w.imag).max(axis=-1) / scale).max())
    wr = np.sort(w.real, axis=-1)
    margin = float(np.diff(wr, axis=-1).min()) if system.m > 1 else np.inf
    a2_pass = bool(a2_imag <= IMAG_TOL and margin > GAP_TOL * scale.max())
    # (A3): sup over ordered pairs in the hyperbolic zone of |int Im F0|
    a3_by_h, a3_witness = _a3_sup(system, zp, cfg)
    a3_sup = a3_by_h[max(a3_by_h)]
    a3_pass = _growth_ok(a3_by_h, cfg, cfg.a3_ceiling)
    # (A4): weak dissipativity in the pseudo-differential zone
    a4_min, need_C, gam_by_h = _a4(system, zp, cfg, diss_c)
    a4_pass = bool(a4_min >= cfg.a4_floor and _growth_ok(gam_by_h, cfg, cfg.gamma_ceiling))
    out = AssumptionReport(
        system=system.name, N=zp.N, nu=zp.nu, strip_c=strip_c, dissipation_c=diss_c,
        a1_class_constants=rep.as_dict()["constants"], a1_pass=a1_pass,
        a2_margin=margin, a2_max_imag=a2_imag, a2_pass=a2_pass,
        a3_sup_by_horizon={f"{h:g}": v for h, v in a3_by_h.items()}, a3_sup=a3_sup,
        a3_witness=a3_witness, a3_pass=a3_pass,
        a4_min_eig=a4_min,
        a4_gamma_constant_by_horizon={f"{h:g}": v for h, v in gam_by_h.items()},
        a4_gamma_required_constant=need_C, a4_pass=a4_pass)
    out.passed = bool(a1_pass and a2_pass and a3_pass and a4_pass)
    return out


def _a3_sup(system, zp, cfg):
    xi = _freq_grid(system, cfg)
    r = np.linalg.norm(xi, axis=-1)
    t0 = boundary_time(r, zp)
    H = sorted(cfg.horizons)
    by_h = {h: 0.0 for h in H}
    witness = [0.0, 0.0, [0.0] * system.n]
    axes_all = reference_axes(system, xi, t0)
    for q in range(len(xi)):
        if t0[q] >= H[-1]:
            continue
        grid = PanelGrid(panel_edges(t0[q], H[-1], breakpoints=H, rel=0.5), cfg.panel_nodes)
        nodes = grid.flat
        F0 = compute_F0(system, nodes, xi[q], axes=np.broadcast_to(axes_all[q], (len(nodes), system.m)))
        imF = F0.imag.reshape(grid.n_panels, grid.p, system.m)
        cum = grid.cumulative(imF).reshape(-1, system.m)
        for h in H:
            sel = nodes <= h * (1 + 1e-12)
            if not np.any(sel):
                continue
            c = cum[sel]
            spread = (c.max(axis=0) - c.min(axis=0))
            v = float(spread.max())
            if v > by_h[h]:
                by_h[h] = v
                if h == H[-1]:
                    j = int(np.argmax(spread))
                    witness = [float(nodes[sel][np.argmin(c[:, j])]),
                               float(nodes[sel][np.argmax(c[:, j])]), xi[q].tolist()]
    return by_h, witness


def _a4(system, zp, cfg, diss_c):
    n = system.n
    times = np.concatenate([[0.0], np.geomspace(1e-2, max(cfg.horizons), cfg.pd_times)])
    dirs = sphere_directions(n, min(cfg.n_dirs, 4))
    fr = np.asarray(cfg.pd_fracs)
    bound = zp.N * log_weight(times, zp.nu) / (1 + times)
    mags = bound[:, None] * fr[None, :]
    xi = (mags[:, :, None, None] * dirs[None, None]).reshape(-1, n)
    tt = np.repeat(times, len(fr) * len(dirs))
    A = system.A.values(tt, xi)
    imA = (A - np.conj(np.swapaxes(A, -1, -2))) / 2j
    r = np.linalg.norm(xi, axis=-1)
    base = np.linalg.eigvalsh(imA)[:, 0] + diss_c * r
    gam = system.gamma_values(tt)
    a4_min = float((base + 0.5 * gam).min())
    need = np.maximum(0.0, -2.0 * base).reshape(len(times), -1).max(axis=1)
    # log-bound constants sup_t int_0^t gamma / log(e+t)^nu
    H = sorted(cfg.horizons)
    grid = PanelGrid(panel_edges(0.0, H[-1], breakpoints=H, rel=0.5), cfg.panel_nodes)
    nodes = grid.flat
    g = system.gamma_values(nodes).reshape(grid.n_panels, grid.p)
    cum = grid.cumulative(g).reshape(-1)
    ratio = cum / log_weight(nodes, zp.nu)
    by_h = {h: float(ratio[nodes <= h * (1 + 1e-12)].max()) for h in H}
    # same constant for the minimal weight the grid demands (trapezoid in log time)
    need_int = np.concatenate([[0.0], np.cumsum(0.5 * (need[1:] + need[:-1]) * np.diff(times))])
    need_C = float((need_int / log_weight(times, zp.nu)).max())
    return a4_min, need_C, by_h
