"""Fresnel surfaces {phi(t, .) = 1}, contact indices and convexity diagnostics.

A phase is any callable ``phi(coords)`` taking a list of ``n`` coordinates
(plain arrays or jets sharing one space) and returning the 1-homogeneous
phase value, built from the elementary functions of :mod:`disphyp.jets`.
Chart derivatives come from solving ``phi(u + rho w + g(rho) d) = 1`` for the
Taylor series of ``g`` by a fixed-point iteration on jets in ``rho``; no
finite differences are involved.
"""
import csv
from dataclasses import dataclass, field
from math import factorial

import numpy as np

from . import jets as J
from .errors import PhaseSignError
from .expr import EvalContext, Expression
from .quadrature import PanelGrid, panel_edges
from .spectral import root_jets

RHO = 1        # jet variable used for the curve parameter
TOL_CONTACT = 1e-6


# ---------------------------------------------------------------------------
# phases


class ExpressionPhase:
    """Phase given by a grammar expression in ``xi[k]`` / ``abs_xi`` (``t`` fixed)."""

    def __init__(self, source, n, t=0.0):
        self.source, self.n, self.t = source, int(n), float(t)
        self.expr = Expression(source, n)

    def __call__(self, coords):
        sp = next((c.space for c in coords if isinstance(c, J.Jet)), None)
        ctx = EvalContext(self.t, np.zeros(self.n), sp)
        ctx._cache["t"] = self.t
        for k, c in enumerate(coords, start=1):
            ctx._cache[("xi", k)] = c
        return ctx_real(self.expr.evaluate(ctx))

    def scaled(self, c):
        return ExpressionPhase(f"({c!r})*({self.source})", self.n, self.t)


def ctx_real(v):
    if isinstance(v, J.Jet):
        return J.Jet(v.space, np.real(v.c))
    return np.real(v)


class ScaledPhase:
    def __init__(self, phase, c):
        self.phase, self.c, self.n = phase, float(c), phase.n

    def __call__(self, coords):
        return self.c * self.phase(coords)


class RootPhase:
    """Averaged root phase phi_j(t, xi) = (1/t) int_0^t lam_j(tau, xi) dtau.

    ``lam_j`` are the sorted roots of the principal symbol of ``system``;
    at ``t = 0`` the phase is lam_j(0, xi).
    """

    def __init__(self, system, t, j, p=16, rel=0.25, chunk=64):
        self.system, self.t, self.j, self.n = system, float(t), int(j), system.n
        if self.t > 0:
            self.grid = PanelGrid(panel_edges(0.0, self.t, rel=rel), p)
        else:
            self.grid = None
        self.chunk = chunk

    def _lam(self, tau, coords):
        A = self.system.A1.compose(tau, coords)
        lam = root_jets(A) if isinstance(A, J.Jet) else np.sort(np.linalg.eigvals(A).real, -1)
        return lam[..., self.j] if isinstance(lam, J.Jet) else lam[..., self.j]

    def __call__(self, coords):
        if self.grid is None:
            return self._lam(np.array(0.0), coords)
        g = self.grid
        nodes = g.flat
        w = np.zeros(nodes.size)
        # quadrature weights of the composite rule
        for k in range(g.n_panels):
            e = np.zeros((g.n_panels, g.p))
            for i in range(g.p):
                e[:] = 0
                e[k, i] = 1.0
                w[k * g.p + i] = g.integral(e)
        shape = np.broadcast_shapes(*[np.shape(c.value if isinstance(c, J.Jet) else c)
                                      for c in coords])
        acc = 0.0
        for a in range(0, nodes.size, self.chunk):
            tau = nodes[a:a + self.chunk].reshape((-1,) + (1,) * len(shape))
            cc = [c if not isinstance(c, J.Jet) else
                  J.Jet(c.space, c.c[:, None]) for c in coords]
            cc = [c if isinstance(c, J.Jet) else np.asarray(c)[None] for c in cc]
            lam = self._lam(tau, cc)
            ww = w[a:a + self.chunk].reshape((-1,) + (1,) * len(shape))
            if isinstance(lam, J.Jet):
                acc = acc + J.Jet(lam.space, np.sum(lam.c * ww[None], axis=1))
            else:
                acc = acc + np.sum(lam * ww, axis=0)
        return acc * (1.0 / self.t)


# ---------------------------------------------------------------------------
# sphere grids and surfaces


def sphere_grid(n, count, include_axes=True):
    """Deterministic direction grid on S^{n-1} (n = 2 or 3) including +-e_i."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        count = max(4, 4 * (count // 4))
        a = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(a), np.sin(a)], axis=1)
    if n == 3:
        k = np.arange(count) + 0.5
        z = 1 - 2 * k / count
        r = np.sqrt(1 - z * z)
        a = np.pi * (1 + 5 ** 0.5) * k
        pts = np.stack([r * np.cos(a), r * np.sin(a), z], axis=1)
        if include_axes:
            pts = np.concatenate([np.vstack([np.eye(3), -np.eye(3)]), pts])
        return pts
    raise ValueError("sphere grids are provided for n <= 3")


def _grad(phase, pts):
    n = pts.shape[1]
    sp = J.get_space(tuple(range(1, n + 1)), 1)
    coords = [J.variable(sp, k + 1, pts[:, k]) for k in range(n)]
    v = phase(coords)
    return np.real(v.value), np.stack([np.real(v.c[sp.index[tuple(int(i == k) for i in range(n))]])
                                       for k in range(n)], axis=-1)


def tangent_basis(normal):
    """Orthonormal basis (P, n, n-1) of the planes orthogonal to unit ``normal``."""
    P, n = normal.shape
    out = np.empty((P, n, n - 1))
    for i, v in enumerate(normal):
        q, _ = np.linalg.qr(np.column_stack([v, np.eye(n)]))
        out[i] = q[:, 1:n]
    return out


@dataclass
class FresnelSurface:
    phase: object
    t: float
    directions: np.ndarray
    radii: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    grad_norm: np.ndarray
    charts: list
    residual: float

    @property
    def n(self):
        return self.points.shape[1]

    @property
    def mean_radius(self):
        return float(np.mean(self.radii))

    def chart_members(self, c):
        axis, sign = self.charts[c]
        return np.nonzero(sign * self.normals[:, axis] >= 0.5)[0]

    def graph_series(self, idx, w, d, degree):
        """Taylor coefficients g_0..g_degree of g with phi(u + rho w + g d) = 1."""
        return curve_series(self.phase, self.points[idx], w, d, degree)

    def chart_derivatives(self, idx, w, degree, frame="normal"):
        """d^j/drho^j h(y + rho w) at the given points, j = 0..degree."""
        d = self.normals[idx] if frame == "normal" else frame
        g = curve_series(self.phase, self.points[idx], w, d, degree)
        return g * np.array([factorial(j) for j in range(degree + 1)])


def curve_series(phase, u, w, d, degree):
    """Series of g(rho) solving phi(u + rho w + g(rho) d) = 1; ``u, w, d`` (P, n)."""
    u, w, d = (np.asarray(x, dtype=float) for x in (u, w, d))
    shape = np.broadcast_shapes(u.shape, w.shape, d.shape)
    u, w, d = (np.broadcast_to(x, shape) for x in (u, w, d))
    n = shape[-1]
    sp = J.get_space((RHO,), degree)
    rho = J.variable(sp, RHO, np.zeros(shape[:-1]))
    _, grad = _grad(phase, u.reshape(-1, n))
    phid = np.sum(grad.reshape(shape) * d, axis=-1)
    g = J.constant(sp, np.zeros(shape[:-1]))
    for _ in range(degree + 1):
        coords = [u[..., k] + rho * w[..., k] + g * d[..., k] for k in range(n)]
        Fc = np.real(phase(coords).c).copy()
        Fc[0] -= 1.0
        g = J.Jet(sp, g.c - Fc / phid)
    return np.moveaxis(np.real(g.c), 0, -1)


def build_surface(phase, t=0.0, sphere=None, n=None, count=512, tol=1e-10):
    """Fresnel surface of a positive 1-homogeneous ``phase`` at time ``t``."""
    n = n if n is not None else phase.n
    omega = sphere_grid(n, count) if sphere is None else np.asarray(sphere, dtype=float)
    omega = omega / np.linalg.norm(omega, axis=1, keepdims=True)
    vals = np.real(phase([omega[:, k] for k in range(n)]))
    vals = np.asarray(vals.value if isinstance(vals, J.Jet) else vals)
    if np.any(vals <= 0):
        i = int(np.argmin(vals))
        raise PhaseSignError(f"phase is not positive at omega={omega[i].tolist()} "
                             f"(value {vals[i]:.3e}); shift it by a linear function first")
    r = 1.0 / vals
    pts = r[:, None] * omega
    v, grad = _grad(phase, pts)
    res = float(np.max(np.abs(v - 1)))
    if res > tol:
        raise PhaseSignError(f"radial map residual {res:.2e} exceeds {tol:g}")
    gn = np.linalg.norm(grad, axis=1)
    normals = grad / gn[:, None]
    charts = [(a, s) for a in range(n) for s in (1, -1)]
    return FresnelSurface(phase, float(t), omega, r, pts, normals, gn, charts, res)


def chart_cover(surface):
    """Fraction of points lying in at least one chart (alignment cosine >= 0.5)."""
    best = np.max(np.abs(surface.normals), axis=1)
    return float(np.mean(best >= 0.5))


# ---------------------------------------------------------------------------
# contact indices


def tangent_directions(n, count=64):
    if n == 2:
        return np.array([[1.0], [-1.0]])
    a = 2 * np.pi * np.arange(count) / count
    return np.stack([np.cos(a), np.sin(a)], axis=1)


@dataclass
class ContactIndexReport:
    gamma: int
    gamma0: int
    kappa: float
    kappa0: float
    convex: bool
    gamma_max: int
    gamma_max_exceeded: bool
    witnesses: dict
    tolerances: dict
    orders: np.ndarray = field(repr=False, default=None)

    def as_dict(self):
        return {"gamma": self.gamma, "gamma0": self.gamma0, "kappa": self.kappa,
                "kappa0": self.kappa0, "convex": self.convex, "gamma_max": self.gamma_max,
                "gamma_max_exceeded": self.gamma_max_exceeded, "witnesses": self.witnesses,
                "tolerances": self.tolerances}


def _orders(der, rbar, gamma_max, tol, scale=None):
    """Contact order per row of ``der`` (..., gamma_max + 1) of rho-derivatives."""
    j = np.arange(der.shape[-1])
    norm = np.abs(der) * rbar ** (j - 1.0)
    if scale is None:
        scale = float(np.max(norm[..., 2]))
    big = norm[..., 2:gamma_max + 1] > tol * scale
    found = big.any(axis=-1)
    order = np.where(found, 2 + np.argmax(big, axis=-1), gamma_max + 1)
    return order, scale


def contact_indices(surface, gamma_max=4, n_dirs=64, tol=TOL_CONTACT):
    """gamma, gamma0, kappa, kappa0 from normal-frame chart derivatives."""
    n = surface.n
    P = len(surface.points)
    T = tangent_basis(surface.normals)
    dirs = tangent_directions(n, n_dirs)
    W = np.einsum("pnk,dk->pdn", T, dirs)                 # (P, D, n)
    u = np.broadcast_to(surface.points[:, None], W.shape)
    d = np.broadcast_to(surface.normals[:, None], W.shape)
    g = curve_series(surface.phase, u, W, d, gamma_max + 1)
    der = g * np.array([factorial(j) for j in range(gamma_max + 2)])
    rbar = surface.mean_radius
    order, scale = _orders(der, rbar, gamma_max, tol)
    exceeded = bool(np.any(order > gamma_max))
    ordc = np.minimum(order, gamma_max)
    gamma = int(ordc.max())
    per_u = ordc.min(axis=1)
    gamma0 = int(per_u.max())
    s_gamma = np.abs(der[..., 2:gamma + 1]).sum(axis=-1)
    s_gamma0 = np.abs(der[..., 2:gamma0 + 1]).sum(axis=-1)
    ku = s_gamma.min(axis=1)
    k0u = s_gamma0.max(axis=1)
    h2 = der[..., 2]
    convex = bool(np.all(h2 <= tol * scale / rbar) or np.all(h2 >= -tol * scale / rbar))
    iu, idir = np.unravel_index(int(np.argmax(ordc)), ordc.shape)
    wit = {"gamma": {"point": surface.points[iu].tolist(), "direction": W[iu, idir].tolist()},
           "gamma0": {"point": surface.points[int(np.argmax(per_u))].tolist()},
           "kappa": {"point": surface.points[int(np.argmin(ku))].tolist()},
           "kappa0": {"point": surface.points[int(np.argmin(k0u))].tolist()}}
    return ContactIndexReport(gamma, gamma0, float(ku.min()), float(k0u.min()), convex,
                              gamma_max, exceeded, wit,
                              {"tol_contact": tol, "scale": scale, "mean_radius": rbar,
                               "points": P, "directions": len(dirs)}, order)


def axis_chart_orders(surface, gamma_max=4, tol=TOL_CONTACT, n_dirs=64):
    """Contact orders computed in the axis-aligned charts.

    Returns a list of ``(chart, point indices, orders)``; each point uses the
    straight lines of the chart's parameter space through it.
    """
    n = surface.n
    out = []
    dirs = tangent_directions(n, n_dirs)
    rbar = surface.mean_radius
    scale = None
    for c, (axis, sign) in enumerate(surface.charts):
        idx = surface.chart_members(c)
        if not len(idx):
            continue
        others = [k for k in range(n) if k != axis]
        W = np.zeros((len(dirs), n))
        W[:, others] = dirs
        dvec = np.zeros(n)
        dvec[axis] = sign
        u = surface.points[idx][:, None]
        g = curve_series(surface.phase, np.broadcast_to(u, (len(idx), len(dirs), n)),
                         W[None], dvec, gamma_max + 1)
        der = g * np.array([factorial(j) for j in range(gamma_max + 2)])
        if scale is None:
            # a chart's own scale: max |h''| over its points
            scale = float(np.max(np.abs(der[..., 2]) * rbar))
        order, _ = _orders(der, rbar, gamma_max, tol, scale)
        out.append(((axis, sign), idx, order))
    return out


# ---------------------------------------------------------------------------
# convexity / shifted phases


class ShiftedPhase:
    """phi_k - alpha, with alpha the middle root (m odd) or mean of middle roots."""

    def __init__(self, roots, k, sign=1.0):
        self.roots, self.k, self.sign = roots, int(k), float(sign)
        self.n = roots[0].n

    def alpha(self, coords):
        m = len(self.roots)
        if m % 2:
            return self.roots[m // 2](coords)
        return 0.5 * (self.roots[m // 2 - 1](coords) + self.roots[m // 2](coords))

    def __call__(self, coords):
        return self.sign * (self.roots[self.k](coords) - self.alpha(coords))


def _hessians(phase, pts):
    n = pts.shape[1]
    sp = J.get_space(tuple(range(1, n + 1)), 2)
    coords = [J.variable(sp, k + 1, pts[:, k]) for k in range(n)]
    v = phase(coords)
    H = np.empty((len(pts), n, n))
    for a in range(n):
        for b in range(n):
            e = [0] * n
            e[a] += 1
            e[b] += 1
            H[:, a, b] = np.real(J.partial(v, tuple(e)))
    return H


@dataclass
class ConvexityReport:
    per_root: list
    alpha_rule: str
    all_semidefinite: bool
    gamma_bound: int
    shifted: list = field(repr=False, default_factory=list)

    def as_dict(self):
        return {"per_root": self.per_root, "alpha_rule": self.alpha_rule,
                "all_semidefinite": self.all_semidefinite, "gamma_bound": self.gamma_bound}


def convexity_check(roots, n=None, count=256, tol=1e-8, surfaces=True, gamma_max=None):
    """Hessian semidefiniteness of each root field on the unit sphere.

    ``roots`` are phase callables (sorted, m of them).  For each root the
    shifted phase ``phi_k - alpha`` is returned with its sign fixed so that it
    is positive where possible; when it is, the convexity of its Fresnel
    surface is cross-checked via the sign of the normal-frame second
    derivatives.
    """
    m = len(roots)
    n = n or roots[0].n
    pts = sphere_grid(n, count)
    gb = 2 * (m // 2) if m > 1 else 2
    per, shifted, ok = [], [], True
    rule = "middle root" if m % 2 else "mean of middle roots"
    for k in range(m):
        H = _hessians(roots[k], pts)
        ev = np.linalg.eigvalsh(H)
        scale = max(1.0, float(np.max(np.abs(ev))))
        psd = bool(ev.min() >= -tol * scale)
        nsd = bool(ev.max() <= tol * scale)
        entry = {"root": k, "min_eig": float(ev.min()), "max_eig": float(ev.max()),
                 "semidefinite": psd or nsd, "sign": "psd" if psd else ("nsd" if nsd else "indefinite")}
        ok &= psd or nsd
        sh = ShiftedPhase(roots, k)
        vals = np.real(sh([pts[:, i] for i in range(n)]))
        entry["shift_zero"] = bool(np.max(np.abs(vals)) <= 1e-12 * scale)
        if not entry["shift_zero"]:
            sgn = 1.0 if np.min(vals) > 0 else (-1.0 if np.max(vals) < 0 else 0.0)
            entry["shift_sign"] = sgn
            if sgn != 0:
                sh = ShiftedPhase(roots, k, sgn)
                shifted.append(sh)
                if surfaces:
                    surf = build_surface(sh, n=n, count=count)
                    rep = contact_indices(surf, gamma_max or gb, n_dirs=16)
                    entry["surface_convex"] = rep.convex
                    entry["surface_gamma"] = rep.gamma
                    entry["gamma_within_bound"] = bool(rep.gamma <= gb)
        per.append(entry)
    return ConvexityReport(per, rule, bool(ok), gb, shifted)


# ---------------------------------------------------------------------------
# export


def export_csv(surface, path, orders=None):
    """Point cloud: omega components, r(omega), contact order (min over directions)."""
    n = surface.n
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"omega{k + 1}" for k in range(n)] + ["r", "contact_order"])
        for i in range(len(surface.points)):
            o = "" if orders is None else int(np.min(orders[i]))
            wr.writerow([f"{x:.17g}" for x in surface.directions[i]] + [f"{surface.radii[i]:.17g}", o])
    return path
