"""Periodic-grid solutions U(t) = F^-1 E(t, 0, xi) F U0 and L^p-L^q decay fits.

The torus [-L, L)^n with ``points`` nodes per axis stands in for R^n; the
wraparound guard ``L >= 2 (sup speed * T + R0)`` keeps periodic images out
of the domain of dependence up to ``T``.  Per-mode propagation uses the
fourth-order Magnus scheme on the whole frequency grid at once (steps
``min(h_max, step_factor (1 + t))``); the batched DOP853 solver is available
for small grids and for spot checks.
"""
import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .errors import GridError
from .integrators import magnus4
from .propagator import solve_direct
from .symbols import cutoff_chi


@dataclass
class GridConfig:
    n: int = 2
    points: int = 1024
    L: float = 700.0
    times: tuple = tuple(np.geomspace(5.0, 100.0, 12))
    pq: tuple = ((4 / 3, 4.0),)
    t0: float = 5.0
    step_factor: float = 0.05
    h_max: float = 0.5
    workers: int = 1

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise GridError("grid dimension must be 1, 2 or 3")
        if self.points & (self.points - 1):
            raise GridError("points per axis must be a power of two")
        for p, q in self.pq:
            if not 1 < p <= 2 or abs(1 / p + 1 / q - 1) > 1e-12:
                raise GridError(f"(p, q) = ({p}, {q}) is not a conjugate pair with p in (1, 2]")

    @property
    def dx(self):
        return 2 * self.L / self.points

    @property
    def cell(self):
        return self.dx ** self.n

    def x_axes(self):
        return [np.arange(self.points) * self.dx - self.L] * self.n

    def xi_axes(self):
        return [2 * np.pi * sfft.fftfreq(self.points, d=self.dx)] * self.n

    def xi_grid(self):
        return np.stack(np.meshgrid(*self.xi_axes(), indexing="ij"), axis=-1)

    def x_grid(self):
        return np.stack(np.meshgrid(*self.x_axes(), indexing="ij"), axis=-1)

    @staticmethod
    def r_p(p, q, n):
        return n * (1 / p - 1 / q)


def max_speed(system, T, samples=64):
    """sup over t <= T and unit xi of the largest |root| of A1."""
    t = np.concatenate([[0.0], np.geomspace(1e-2, max(T, 1e-2), samples)])
    n = system.n
    if n == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        a = np.linspace(0, 2 * np.pi, 33)[:-1]
        dirs = np.stack([np.cos(a), np.sin(a)] + [np.zeros_like(a)] * (n - 2), axis=1)
    tt = np.repeat(t, len(dirs))
    X = np.tile(dirs, (len(t), 1))
    lam = np.linalg.eigvals(system.A1.values(tt, X))
    return float(np.abs(lam).max())


def support_radius(U0, grid, rel=1e-12):
    x = grid.x_grid()
    mag = np.sqrt(np.sum(np.abs(U0) ** 2, axis=-1))
    big = mag > rel * mag.max()
    return float(np.linalg.norm(x[big], axis=-1).max()) if big.any() else 0.0


def check_guard(system, U0, grid, T):
    speed = max_speed(system, T)
    R0 = support_radius(U0, grid)
    need = 2 * (speed * T + R0)
    if grid.L < need:
        raise GridError(f"wraparound guard violated: L = {grid.L:g} < 2(sup speed T + R0) = {need:.4g}")
    return {"sup_speed": speed, "R0": R0, "required_L": need}


def fft_data(U0, grid):
    axes = tuple(range(grid.n))
    return sfft.fftn(U0, axes=axes, workers=grid.workers)


def ifft_data(V, grid):
    axes = tuple(range(grid.n))
    return sfft.ifftn(V, axes=axes, workers=grid.workers)


@dataclass
class Snapshots:
    times: list
    fields: dict                  # t -> U(t, x) array (points^n, m)
    hat: dict                     # t -> F U(t) (for filtering)
    grid: GridConfig
    guard: dict = field(default_factory=dict)
    backend: str = "magnus"


def _propagate_modes(system, grid, V0, times, backend):
    xi = grid.xi_grid().reshape(-1, grid.n)
    m = V0.shape[-1]
    Y0 = V0.reshape(-1, m)
    T = max(times)
    if backend == "direct":
        out = {}
        for t in times:
            E = solve_direct(system, np.full(len(xi), t), 0.0, xi)
            out[t] = np.einsum("pij,pj->pi", E, Y0)
        return out
    if backend != "magnus":
        raise GridError(f"unknown grid backend {backend!r}")

    def A_of(t):
        return system.A.values(t, xi)

    def h_fn(t):
        return min(grid.h_max, grid.step_factor * (1 + t))

    _, snaps = magnus4(A_of, 0.0, T, Y0, h_fn, snapshots=times)
    return {t: snaps[float(t)] for t in times}


def grid_solve(system, U0, grid, times, backend="magnus", guard=True):
    """Snapshots U(t) for ``times`` (``U0`` shape (points,)*n + (m,))."""
    times = sorted(float(t) for t in times)
    info = check_guard(system, U0, grid, max(times)) if guard and len(times) else {}
    V0 = fft_data(U0, grid)
    fields, hats = {}, {}
    pos = [t for t in times if t > 0]
    props = _propagate_modes(system, grid, V0, pos, backend) if pos else {}
    shape = V0.shape
    for t in times:
        if t == 0:
            fields[t] = np.array(U0, copy=True)
            hats[t] = V0
            continue
        Vt = props[t].reshape(shape)
        hats[t] = Vt
        fields[t] = ifft_data(Vt, grid)
    return Snapshots(times, fields, hats, grid, info, backend)


# ---------------------------------------------------------------------------
# norms


def lq_norm(U, grid, q):
    mag = np.sqrt(np.sum(np.abs(U) ** 2, axis=-1)) if U.ndim > grid.n else np.abs(U)
    if np.isinf(q):
        return float(mag.max())
    return float((np.sum(mag ** q) * grid.cell) ** (1 / q))


def sobolev_norm(U, grid, p, r, homogeneous=False):
    """Discrete proxy ||F^-1 w(xi) F U||_p with w = (1 + |xi|^2)^(r/2) or |xi|^r."""
    if r < 0:
        raise ValueError("Sobolev order must be non-negative")
    if r == 0:
        return lq_norm(U, grid, p)
    xi = np.sqrt(np.sum(grid.xi_grid() ** 2, axis=-1))
    w = xi ** r if homogeneous else (1 + xi ** 2) ** (r / 2)
    V = fft_data(U, grid)
    V = V * (w[..., None] if U.ndim > grid.n else w)
    return lq_norm(ifft_data(V, grid), grid, p)


# ---------------------------------------------------------------------------
# decay fits


@dataclass
class DecayEntry:
    p: float
    q: float
    exponent: float
    predicted: float
    eps_tol: float
    passed: bool
    data_norm: float
    times: list
    norms: list
    strict_passed: bool = None     # against the tightened tolerance, when it applies

    def as_dict(self):
        d = {"p": self.p, "q": self.q, "exponent": self.exponent, "predicted": self.predicted,
             "eps_tol": self.eps_tol, "passed": self.passed, "data_norm": self.data_norm,
             "times": self.times, "norms": self.norms}
        if self.strict_passed is not None:
            d["strict_passed"] = self.strict_passed
        return d


@dataclass
class DecayReport:
    entries: list
    index: int
    convex: bool
    n: int

    @property
    def passed(self):
        return all(e.passed for e in self.entries)

    def as_dict(self):
        return {"index": self.index, "convex": self.convex, "n": self.n,
                "entries": [e.as_dict() for e in self.entries], "passed": self.passed}


def fit_exponent(times, values, t0=0.0, min_points=2):
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    sel = (t >= t0) & (v > 1e-300)
    if sel.sum() < min_points:
        raise GridError("not enough usable snapshots for a decay fit")
    A = np.stack([np.ones(sel.sum()), np.log(t[sel])], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.log(v[sel]), rcond=None)
    return float(coef[1])


def predicted_exponent(n, index, p, q, convex=True):
    return -((n - 1) / index if convex else 1.0 / index) * (1 / p - 1 / q)


def decay_measurement(snaps, pq=None, index=2, convex=True, eps_tol=0.15, data=None,
                      strict_tol=None):
    """Fitted exponents of ||U(t)||_q against the predicted rates.

    ``strict_tol`` adds a second verdict with the smaller allowance that
    applies when no epsilon-loss is expected (nu = 0, xi-independent F0).
    """
    g = snaps.grid
    pq = pq or g.pq
    times = [t for t in snaps.times if t >= g.t0]
    if len(times) < 8 or max(times) < 10 * g.t0 * (1 - 1e-12):
        raise GridError("fit needs >= 8 snapshots spanning >= 1 decade past t0")
    entries = []
    for p, q in pq:
        norms = [lq_norm(snaps.fields[t], g, q) for t in times]
        ex = fit_exponent(times, norms)
        pred = predicted_exponent(g.n, index, p, q, convex)
        dn = sobolev_norm(data, g, p, GridConfig.r_p(p, q, g.n)) if data is not None else float("nan")
        strict = None if strict_tol is None else bool(ex <= pred + strict_tol)
        entries.append(DecayEntry(p, q, ex, pred, eps_tol, bool(ex <= pred + eps_tol), dn,
                                  times, norms, strict))
    return DecayReport(entries, index, convex, g.n)


def theorem_hypotheses(n, index, smoothness=None):
    """Derivative budget floor((n - 1)/index) <= min(l1 - 1, l2/2 - 2).

    ``smoothness = (l1, l2)`` counts the xi- and t-derivatives the symbol
    admits; None stands for a smooth symbol.  Runs outside the budget are
    still carried out and only flagged.
    """
    need = (n - 1) // index
    if smoothness is None:
        return {"required": need, "available": None, "inside": True}
    l1, l2 = smoothness
    avail = min(l1 - 1, l2 / 2 - 2)
    out = {"required": need, "available": avail, "inside": bool(need <= avail)}
    if not out["inside"]:
        out["note"] = "outside theorem hypotheses"
    return out


def drift_is_xi_independent(system, times=(1.0, 10.0, 100.0), count=8, tol=1e-10):
    """True when the diagonal drift F0(t, xi) does not vary with xi on a probe set."""
    from .spectral import compute_F0
    from .symbols import sphere_directions
    dirs = sphere_directions(system.n, count)
    mags = np.array([0.5, 2.0, 8.0]) * system.zone.N
    xi = (mags[:, None, None] * dirs[None]).reshape(-1, system.n)
    for t in times:
        F = compute_F0(system, np.full(len(xi), t), xi)
        if np.abs(F - F[:1]).max() > tol * max(1.0, np.abs(F).max()):
            return False
    return True


def low_frequency_decay(snaps, zone, t_min=None, slope_max=None):
    """Sup norm of the chi_pd-filtered solution and its log-log slope."""
    g = snaps.grid
    xi = g.xi_grid()
    times = [t for t in snaps.times if t >= (g.t0 if t_min is None else t_min)]
    sups = []
    for t in times:
        w = cutoff_chi(t, xi, zone, "pd")
        V = snaps.hat[t] * w[..., None]
        sups.append(lq_norm(ifft_data(V, g), g, np.inf))
    slope = fit_exponent(times, sups)
    bound = -g.n + 0.2 if slope_max is None else slope_max
    return {"times": times, "sup_norms": sups, "slope": slope, "slope_max": bound,
            "passed": bool(slope <= bound)}


def filtered_quadrature(system, U0_hat_fn, zone, t, x, n_rho=256, n_ang=256):
    """Direct polar quadrature of (2 pi)^-n int chi_pd(t, xi) E(t, 0, xi) U0^(xi) e^{i x xi} dxi.

    ``U0_hat_fn(xi)`` is the continuous Fourier transform of the data.  Used
    as an oracle for the filtered low-frequency piece (n = 2).
    """
    from .symbols import boundary_time
    x = np.atleast_2d(x)
    r_max = 2.0 * zone.N / (1 + t) if zone.nu == 0 else float(
        zone.N * np.log(np.e + t) ** zone.nu / (1 + t) * 2)
    xr, wr = np.polynomial.legendre.leggauss(n_rho)
    rho = 0.5 * r_max * (xr + 1)
    wr = 0.5 * r_max * wr
    ang = 2 * np.pi * np.arange(n_ang) / n_ang
    XI = (rho[:, None, None] * np.stack([np.cos(ang), np.sin(ang)], -1)[None]).reshape(-1, 2)
    W = (wr[:, None] * rho[:, None] * np.full(n_ang, 2 * np.pi / n_ang)[None]).reshape(-1)
    chi = cutoff_chi(t, XI, zone, "pd")
    E = solve_direct(system, np.full(len(XI), t), 0.0, XI)
    V = np.einsum("pij,pj->pi", E, U0_hat_fn(XI)) * (chi * W)[:, None]
    phase = np.exp(1j * x @ XI.T)
    return phase @ V / (2 * np.pi) ** 2


def export_norms_csv(report, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["p", "q", "t", "norm"])
        for e in report.entries:
            for t, v in zip(e.times, e.norms):
                w.writerow([f"{e.p:.17g}", f"{e.q:.17g}", f"{t:.17g}", f"{v:.17g}"])
    return path


def gaussian_data(grid, sigma=5.0, m=2, component=0, center=None):
    """Gaussian bump in one component of an m-vector."""
    x = grid.x_grid()
    c = np.zeros(grid.n) if center is None else np.asarray(center, dtype=float)
    g = np.exp(-np.sum((x - c) ** 2, axis=-1) / (2 * sigma ** 2))
    U = np.zeros(g.shape + (m,), dtype=complex)
    U[..., component] = g
    return U
