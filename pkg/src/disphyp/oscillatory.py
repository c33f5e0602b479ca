"""Model oscillatory integrals I(lam) = int exp(i lam Phi(x)) a(x) chi(x) dx and decay fits.

Integrals are taken in polar coordinates x = z + rho omega around the
expansion point ``z``: composite Gauss-Legendre panels in ``rho`` sized so
that every oscillation period of ``lam Phi`` carries at least 20 nodes,
periodic trapezoid rules in the angles, and one refinement in which all node
counts are doubled.  The difference between the two levels is the reported
error estimate.

Phases are callables on coordinate lists (arrays or jets), the same
convention as :mod:`disphyp.fresnel`, so the Taylor data a_j(mu) of
F(rho, mu) = Phi(z + rho omega) are exact.
"""
import csv
from dataclasses import dataclass, field
from math import factorial

import numpy as np

from . import jets as J
from .errors import DegeneratePhaseError, FitError
from .fresnel import ExpressionPhase, _grad, tangent_basis

NODES_PER_PERIOD = 20


def cutoff(s):
    """Smooth radial cutoff: 1 for s <= 1/2, 0 for s >= 1 (C-infinity)."""
    return 1.0 - J.smoothstep(2.0 * np.asarray(s) - 1.0)


@dataclass
class ModelIntegralSpec:
    """Integral of exp(i lam Phi) a chi over B_{delta/2}(0) in R^N."""

    N: int
    phase: object                      # callable on coords, or expression string
    gamma: int
    delta: float = 1.0
    amplitude: object = None           # callable on coords; None means 1
    z: tuple = None
    lambdas: tuple = tuple(np.geomspace(10.0, 1e4, 16))
    name: str = ""

    def __post_init__(self):
        if isinstance(self.phase, str):
            self.phase = ExpressionPhase(self.phase, self.N)
        self.z = np.zeros(self.N) if self.z is None else np.asarray(self.z, dtype=float)
        self.radius = 0.5 * self.delta

    def Phi(self, x):
        return self.phase([x[..., k] for k in range(self.N)])

    def amp(self, x):
        a = 1.0 if self.amplitude is None else self.amplitude([x[..., k] for k in range(self.N)])
        return a * cutoff(np.linalg.norm(x, axis=-1) / self.radius)

    @property
    def rho_max(self):
        return float(self.radius + np.linalg.norm(self.z))


# ---------------------------------------------------------------------------
# angular grids


def _angles(N, M):
    """Directions and weights on S^{N-1}; M controls the resolution."""
    if N == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if N == 2:
        a = 2 * np.pi * np.arange(M) / M
        return np.stack([np.cos(a), np.sin(a)], axis=1), np.full(M, 2 * np.pi / M)
    if N == 3:
        Mp = max(8, M // 2)
        x, w = np.polynomial.legendre.leggauss(Mp)
        a = 2 * np.pi * np.arange(M) / M
        ct, ph = np.meshgrid(x, a, indexing="ij")
        st = np.sqrt(1 - ct ** 2)
        dirs = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=-1).reshape(-1, 3)
        ww = (w[:, None] * np.full(M, 2 * np.pi / M)[None]).reshape(-1)
        return dirs, ww
    raise ValueError("polar quadrature implemented for N <= 3")


def _frequency_scale(spec, M=64, R=64):
    """max |d_rho Phi| and max |d_angle Phi| over the support (sampled)."""
    dirs, _ = _angles(spec.N, M)
    rho = np.linspace(0, spec.rho_max, R)
    x = spec.z + rho[:, None, None] * dirs[None]
    v = np.real(spec.Phi(x))
    gr = np.abs(np.diff(v, axis=0)).max() / (rho[1] - rho[0]) if R > 1 else 0.0
    if spec.N == 1:
        return float(gr), 0.0, v
    step = 2 * np.pi / M if spec.N == 2 else np.pi / max(8, M // 2)
    ga = np.abs(np.diff(v, axis=1)).max() / step
    return float(gr), float(ga), v


@dataclass
class IntegralValue:
    value: complex
    error: float
    coarse: complex
    nodes: int
    lam: float


def _polar(spec, lam, n_panels, M, p=NODES_PER_PERIOD):
    x, w = np.polynomial.legendre.leggauss(p)
    edges = np.linspace(0, spec.rho_max, n_panels + 1)
    half = 0.5 * np.diff(edges)
    rho = (edges[:-1, None] + (x[None] + 1) * half[:, None]).reshape(-1)
    wr = (w[None] * half[:, None]).reshape(-1)
    dirs, wa = _angles(spec.N, M)
    total = 0.0 + 0.0j
    chunk = max(1, 400000 // len(dirs))
    for a in range(0, len(rho), chunk):
        r = rho[a:a + chunk]
        pts = spec.z + r[:, None, None] * dirs[None]
        f = np.exp(1j * lam * spec.Phi(pts)) * spec.amp(pts)
        total += np.einsum("r,a,ra->", wr[a:a + chunk] * r ** (spec.N - 1), wa, f)
    return total, len(rho) * len(dirs)


def evaluate_model_integral(spec, lam, min_panels=8, min_angles=32):
    """I(lam) with an error estimate from one doubling of every node count."""
    gr, ga, _ = _frequency_scale(spec)
    if gr == 0 and ga == 0:
        rep = check_conditions(spec)
        if rep["F2"]["constant"] <= 1e-12:
            raise DegeneratePhaseError("phase has no oscillation and vanishing Taylor data")
    nr = max(min_panels, int(np.ceil(lam * gr * spec.rho_max / (2 * np.pi))) + 1)
    M = max(min_angles, int(np.ceil(NODES_PER_PERIOD * lam * ga / (2 * np.pi))))
    M += M % 2
    coarse, _ = _polar(spec, lam, nr, M)
    fine, nodes = _polar(spec, lam, 2 * nr, 2 * M)
    err = abs(fine - coarse) + 1e-15 * abs(fine)
    return IntegralValue(fine, float(err), coarse, nodes, float(lam))


# ---------------------------------------------------------------------------
# hypotheses F1-F4


def taylor_data(spec, dirs, degree, rho0=0.0):
    """Taylor coefficients of F(rho, omega) = Phi(z + rho omega) at ``rho0``."""
    sp = J.get_space((1,), degree)
    r = J.variable(sp, 1, np.full(len(dirs), float(rho0)))
    coords = [spec.z[k] + r * dirs[:, k] for k in range(spec.N)]
    F = spec.phase(coords)
    return np.moveaxis(np.asarray(F.c), 0, -1)      # (D, degree + 1)


def check_conditions(spec, n_dirs=64, n_rho=64, tol=1e-10):
    """Named checks of the hypotheses on F(rho, omega) with witnesses."""
    dirs, _ = _angles(spec.N, n_dirs)
    g = spec.gamma
    a = taylor_data(spec, dirs, g + 1)
    a01 = np.abs(a[:, :2]).max(axis=0)
    F1 = {"passed": bool(a01.max() <= tol), "max_a0": float(a01[0]), "max_a1": float(a01[1])}
    s = np.abs(a[:, 2:g + 1]).sum(axis=1)
    F2 = {"passed": bool(s.min() > tol), "constant": float(s.min()),
          "witness": dirs[int(np.argmin(s))].tolist()}
    rho = np.linspace(0, spec.rho_max, n_rho + 1)[1:]
    d1 = np.empty((n_rho, len(dirs)))
    bounds = np.zeros(g + 2)
    for i, r0 in enumerate(rho):
        c = taylor_data(spec, dirs, g + 1, r0)
        der = np.abs(c) * np.array([factorial(k) for k in range(g + 2)])
        d1[i] = der[:, 1]
        bounds = np.maximum(bounds, der.max(axis=0))
    inc = np.diff(d1, axis=0) >= -1e-9 * max(1.0, d1.max())
    bad = np.argwhere(~inc)
    F3 = {"passed": bool(inc.all()),
          "witness": None if not len(bad) else {"rho": float(rho[bad[0, 0]]),
                                                "direction": dirs[bad[0, 1]].tolist()}}
    F4 = {"passed": bool(np.all(np.isfinite(bounds))), "bounds": bounds[1:].tolist()}
    Im = np.imag(taylor_data(spec, dirs, 0, 0.0))
    return {"F1": F1, "F2": F2, "F3": F3, "F4": F4,
            "imag_nonnegative": bool(Im.min() >= -tol) if Im.size else True}


# ---------------------------------------------------------------------------
# decay fits


@dataclass
class DecayFit:
    slope: float
    theoretical: float
    residual: float
    half_width: float
    lam_range: tuple
    window: tuple
    C_fit: float
    bound_holds: bool
    passed: bool
    points: int
    lambdas: list = field(default_factory=list)
    values: list = field(default_factory=list)

    def as_dict(self):
        return {"slope": self.slope, "theoretical": self.theoretical, "residual": self.residual,
                "half_width": self.half_width, "lam_range": list(self.lam_range),
                "window": list(self.window), "C_fit": self.C_fit,
                "bound_holds": self.bound_holds, "passed": self.passed, "points": self.points}


def fit_decay(lambdas, values, gamma, N, window_decades=1.5, slack=0.1, min_samples=12,
              c_margin=1.5):
    """Least-squares log-log slope on the top ``window_decades`` of the grid.

    Passes iff slope <= -N/gamma + slack.  ``C_fit`` is ``c_margin`` times
    the largest |I| (1 + lam)^{N/gamma} over the whole grid.
    """
    lam = np.asarray(lambdas, dtype=float)
    v = np.abs(np.asarray(values))
    if len(lam) < min_samples or lam.max() / lam.min() < 10 ** 3 * (1 - 1e-9):
        raise FitError(f"need >= {min_samples} samples over >= 3 decades")
    rate = N / gamma
    good = v > 0
    win = good & (lam >= lam.max() / 10 ** window_decades * (1 - 1e-12))
    if win.sum() < 6:
        raise FitError(f"only {int(win.sum())} usable points in the fit window")
    x, y = np.log(lam[win]), np.log(v[win])
    A = np.stack([np.ones_like(x), x], axis=1)
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    r = y - A @ coef
    dof = max(1, len(x) - 2)
    s2 = float(r @ r) / dof
    se = np.sqrt(s2 / np.sum((x - x.mean()) ** 2))
    C = c_margin * float(np.max(v[good] * (1 + lam[good]) ** rate))
    holds = bool(np.all(v <= C * (1 + lam) ** -rate))
    slope = float(coef[1])
    return DecayFit(slope, -rate, float(np.sqrt(s2)), float(1.96 * se),
                    (float(lam.min()), float(lam.max())),
                    (float(lam[win].min()), float(lam[win].max())), C, holds,
                    bool(slope <= -rate + slack), int(win.sum()), lam.tolist(), v.tolist())


def export_decay_csv(fit, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "abs_value"])
        for a, b in zip(fit.lambdas, fit.values):
            w.writerow([f"{a:.17g}", f"{b:.17g}"])
    return path


# ---------------------------------------------------------------------------
# surface kernels


class ChartPhase:
    """F(y) = h(z + y) - h(z) - grad h(z) . y for the normal-frame chart at ``u``.

    ``h`` is defined implicitly by ``phi(u + T y + h(y) nu) = 1``; the graph
    is evaluated by Newton's method on values, then refined on jets by a
    fixed-point iteration (one order per sweep).
    """

    def __init__(self, surface, index, z=None, newton_tol=1e-14, max_iter=60):
        self.surface = surface
        self.u = surface.points[index]
        self.nu = surface.normals[index]
        self.T = tangent_basis(self.nu[None])[0]
        self.N = surface.n - 1
        self.phase = surface.phase
        self.newton_tol, self.max_iter = newton_tol, max_iter
        self.z = np.zeros(self.N) if z is None else np.asarray(z, dtype=float)
        sp = J.get_space(tuple(range(1, self.N + 1)), 1)
        zj = [J.variable(sp, k + 1, np.array([self.z[k]])) for k in range(self.N)]
        hz = self.height(zj)
        self.h0 = float(np.real(hz.value[0]))
        self.grad = np.array([np.real(J.partial(hz, tuple(int(i == k) for i in range(self.N))))[0]
                              for k in range(self.N)])

    def _point(self, y, s):
        return [self.u[k] + sum(self.T[k, j] * y[j] for j in range(self.N)) + s * self.nu[k]
                for k in range(self.N + 1)]

    def height(self, y):
        """h(y) for coordinate arrays or jets ``y`` (list of N)."""
        base = [c.value if isinstance(c, J.Jet) else np.asarray(c, dtype=float) for c in y]
        shape = np.broadcast_shapes(*[np.shape(b) for b in base])
        s = np.zeros(shape)
        sp1 = J.get_space((1,), 1)
        for _ in range(self.max_iter):
            sj = J.variable(sp1, 1, s)
            v = self.phase(self._point(base, sj))
            f = np.real(v.c[0]) - 1.0
            df = np.real(v.c[1])
            step = f / df
            s = s - step
            if np.max(np.abs(step), initial=0.0) <= self.newton_tol * (1 + np.max(np.abs(s), initial=0.0)):
                break
        jet = next((c for c in y if isinstance(c, J.Jet)), None)
        if jet is None:
            return s
        sp = jet.space
        sj = J.constant(sp, s)
        slope = np.real(self.phase(self._point(base, J.variable(sp1, 1, s))).c[1])
        for _ in range(sp.degree + 1):
            c = np.real(self.phase(self._point(y, sj)).c).copy()
            c[0] -= 1.0
            sj = J.Jet(sp, sj.c - c / slope)
        return sj

    def __call__(self, coords):
        y = [self.z[k] + coords[k] for k in range(self.N)]
        h = self.height(y)
        lin = sum(self.grad[k] * coords[k] for k in range(self.N))
        return h - self.h0 - lin


def kernel_spec(surface, index, radius, gamma, z=None, amplitude=None, name=""):
    """ModelIntegralSpec of the surface kernel J(lam, z) around ``surface.points[index]``."""
    ph = ChartPhase(surface, index, z)
    return ModelIntegralSpec(N=surface.n - 1, phase=ph, gamma=gamma, delta=2 * radius,
                             amplitude=amplitude, z=np.zeros(surface.n - 1), name=name)


def surface_kernel(surface, index, lam, radius=None, gamma=2, z=None, amplitude=None):
    """J(lam, z) = int exp(i lam F) a chi dy over the chart at ``surface.points[index]``.

    The unimodular constant-phase factor is dropped.  The cutoff radius
    defaults to 0.4 times the mean surface radius; ``clipped`` is set when
    the Newton solve for the graph fails inside the support.
    """
    radius = 0.4 * surface.mean_radius if radius is None else radius
    spec = kernel_spec(surface, index, radius, gamma, z, amplitude)
    if lam == 0:
        val, nodes = _polar(spec, 0.0, 16, 64)
        return IntegralValue(val, 0.0, val, nodes, 0.0)
    return evaluate_model_integral(spec, lam)


def kernel_decay(surface, index, lambdas, gamma, radius=None, N=None):
    vals = [surface_kernel(surface, index, lam, radius, gamma) for lam in lambdas]
    N = surface.n - 1 if N is None else N
    return fit_decay(lambdas, [v.value for v in vals], gamma, N), vals
