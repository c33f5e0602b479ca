"""Bundled system families: differential systems, second-order and higher-order equations.

All families are assembled as expression symbols, so every derivative used
downstream is exact.  Coefficient classes ``T_nu{rho}`` are checked with
the decaying exponent ``rho + k``::

    |d_t^k f(t)| <= C_k ((log(e + t))**nu / (1 + t))**(rho + k)
"""
from dataclasses import dataclass, field

import numpy as np

from . import jets as J
from .errors import ConfigError, HyperbolicityError
from .expr import Expression
from .quadrature import PanelGrid, panel_edges
from .symbols import ExpressionSymbol, ZoneParams, boundary_time, sphere_directions, time_weight
from .system import HyperbolicSystem

SystemFamily = HyperbolicSystem


def _num(x):
    return repr(float(x))


def _wrap(s):
    return f"({s})"


# ---------------------------------------------------------------------------
# coefficient classes


@dataclass
class CoefficientFunction:
    """Scalar coefficient f(t) declared to lie in T_nu{rho}."""

    expr: str
    nu: float = 0.0
    rho: float = 0.0

    def __post_init__(self):
        self._e = Expression(self.expr, 1)

    def derivatives(self, t, kmax):
        """Array ``(kmax + 1, len(t))`` of exact derivatives."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        sp = J.get_space((0,), kmax)
        v = self._e(t, np.zeros(t.shape + (1,)), sp)
        out = np.zeros((kmax + 1,) + t.shape, dtype=complex)
        if isinstance(v, J.Jet):
            for k in range(kmax + 1):
                out[k] = J.partial(v, (k,))
        else:
            out[0] = v
        return out

    def __call__(self, t):
        return self.derivatives(t, 0)[0]


@dataclass
class TClassReport:
    constants: list
    constants_early: list
    witnesses: list
    ceiling: float
    passed: bool

    def as_dict(self):
        return {"constants": [float(c) for c in self.constants],
                "constants_early": [float(c) for c in self.constants_early],
                "witnesses": [float(w) for w in self.witnesses],
                "ceiling": self.ceiling, "passed": self.passed}


def check_T_class(f, grid=None, kmax=4, ceiling=1e3, growth_tol=1.25, t_split=1e3):
    """Empirical constants of ``f`` in T_nu{rho} up to ``kmax`` time derivatives.

    Passes iff every constant is below ``ceiling`` and does not keep growing
    between the sub-grid ``t <= t_split`` and the full grid.
    """
    if grid is None:
        grid = np.concatenate([[0.0], np.geomspace(1e-2, 1e4, 2000)])
    t = np.asarray(grid, dtype=float)
    d = np.abs(f.derivatives(t, kmax))
    w = time_weight(t, f.nu)
    consts, early, wit = [], [], []
    for k in range(kmax + 1):
        r = d[k] / w ** (f.rho + k)
        i = int(np.argmax(r))
        consts.append(float(r[i]))
        wit.append(float(t[i]))
        early.append(float(r[t <= t_split].max()))
    ok = all(np.isfinite(c) and c <= ceiling and c <= growth_tol * e + 1e-12
             for c, e in zip(consts, early))
    return TClassReport(consts, early, wit, ceiling, bool(ok))


# ---------------------------------------------------------------------------
# builders


def _probe_times():
    return np.concatenate([[0.0], np.geomspace(1e-2, 1e4, 25)])


def build_differential_system(A_list, B, name="differential", zone=None, gamma="0", params=None):
    """A(t, xi) = sum_j A_j(t) xi_j + B(t) from matrices of expressions in ``t``."""
    n = len(A_list)
    if n == 0:
        raise ValueError("need at least one A_j")
    m = len(B)
    for Aj in list(A_list) + [B]:
        if len(Aj) != m or any(len(r) != m for r in Aj):
            raise ValueError("all A_j and B must be m x m with the same m")
    prin = [[" + ".join(f"{_wrap(A_list[j][a][b])}*xi[{j + 1}]" for j in range(n))
             for b in range(m)] for a in range(m)]
    full = [[f"{prin[a][b]} + {_wrap(B[a][b])}" for b in range(m)] for a in range(m)]
    tt = _probe_times()
    herm = True
    for Aj in A_list:
        vals = np.array([[np.broadcast_to(Expression(x, n)(tt, np.zeros((len(tt), n))), tt.shape)
                          for x in row] for row in Aj])
        vals = np.moveaxis(vals, -1, 0)
        if np.abs(vals - np.conj(np.swapaxes(vals, -1, -2))).max() > 1e-12 * max(1.0, np.abs(vals).max()):
            herm = False
    sys = HyperbolicSystem(
        name=name, A=ExpressionSymbol(full, n), A1=ExpressionSymbol(prin, n, homogeneous=True),
        zone=zone or ZoneParams(), gamma=gamma, hermitian_principal=herm,
        params=dict(params or {}, kind="differential-system",
                    A_list=[[list(map(str, r)) for r in Aj] for Aj in A_list],
                    B=[list(map(str, r)) for r in B]))
    return sys


def _h_expr(zone):
    """|xi| in the hyperbolic zone, N log(e+t)^nu/(1+t) deep in the pd zone, smooth between."""
    h0 = f"({_num(zone.N)}*pow(log(e+t), {_num(zone.nu)})/(1+t))"
    s = f"smoothstep(2*abs_xi/{h0} - 1)"
    return f"(abs_xi*{s} + {h0}*(1 - {s}))"


def _quad_form(a, n):
    terms = []
    for i in range(n):
        for j in range(i, n):
            if str(a[i][j]).strip() not in ("0", "0.0"):
                terms.append(f"{_wrap(a[i][j])}*xi[{i + 1}]*xi[{j + 1}]")
    return " + ".join(terms) if terms else "0"


def _lin_form(b, n):
    terms = [f"{_wrap(b[j])}*xi[{j + 1}]" for j in range(n) if str(b[j]).strip() not in ("0", "0.0")]
    return " + ".join(terms) if terms else "0"


def build_second_order(a, b, c="0", d=None, e="0", name="second_order", zone=None,
                       gamma="0", params=None):
    """2x2 system for D_t^2 u = (b.xi) D_t u + (a xi.xi) u + c D_t u + (d.xi) u + e u.

    The unknown is U = (h u, D_t u) with h(t, xi) as in :func:`_h_expr`; only
    the upper triangle ``a[i][j], i <= j`` enters the quadratic form.
    """
    n = len(a)
    if any(len(r) != n for r in a) or len(b) != n:
        raise ValueError("a must be n x n and b of length n")
    d = d if d is not None else ["0"] * n
    zone = zone or ZoneParams()
    q, lb, ld = _quad_form(a, n), _lin_form(b, n), _lin_form(d, n)
    h = _h_expr(zone)
    full = [[f"-i*dt({h})/{h}", h],
            [f"({q} + {ld} + {_wrap(e)})/{h}", f"{lb} + {_wrap(c)}"]]
    prin = [["0", "abs_xi"], [f"({q})/abs_xi", lb]]
    _check_second_order_hyperbolic(q, lb, n)
    return HyperbolicSystem(
        name=name, A=ExpressionSymbol(full, n), A1=ExpressionSymbol(prin, n, homogeneous=True),
        zone=zone, gamma=gamma, params=dict(params or {}, kind="second-order",
                                            a=a, b=b, c=c, d=d, e=e))


def _check_second_order_hyperbolic(q, lb, n):
    tt = _probe_times()
    dirs = sphere_directions(n, 16) if n > 1 else np.array([[1.0], [-1.0]])
    if n == 2:
        ang = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    T = np.repeat(tt, len(dirs))
    X = np.tile(dirs, (len(tt), 1))
    disc = np.real(Expression(lb, n)(T, X)) ** 2 + 4 * np.real(Expression(q, n)(T, X))
    disc = np.broadcast_to(disc, T.shape)
    if disc.min() <= 1e-12:
        i = int(np.argmin(disc))
        raise HyperbolicityError(
            f"(b.xi)^2 + 4 a xi.xi = {disc[i]:.3e} <= 0 at t={T[i]:g}, xi={X[i].tolist()}")


def _monomial(alpha):
    parts = [f"xi[{k + 1}]**{p}" for k, p in enumerate(alpha) if p]
    return "*".join(parts) if parts else "1"


def build_higher_order(m, coeffs, n, name="higher_order", zone=None, gamma="0", params=None):
    """Companion reduction of D_t^m u + sum a_{j,alpha}(t) D_t^j D_x^alpha u = 0.

    ``coeffs`` maps ``(j, alpha)`` to an expression in ``t``.  The unknown is
    ``U_k = h^(m-1-k) D_t^k u`` (k = 0..m-1), so the principal part is the
    companion matrix of the homogeneous characteristic polynomial scaled by
    ``|xi|``.
    """
    m = int(m)
    zone = zone or ZoneParams()
    coeffs = {(int(j), tuple(int(x) for x in al)): str(v) for (j, al), v in coeffs.items()}
    for (j, al) in coeffs:
        if not (0 <= j < m) or len(al) != n or j + sum(al) > m:
            raise ValueError(f"bad coefficient index (j={j}, alpha={al})")
    h = _h_expr(zone)
    full = [["0"] * m for _ in range(m)]
    prin = [["0"] * m for _ in range(m)]
    for k in range(m - 1):
        full[k][k + 1] = h
        prin[k][k + 1] = "abs_xi"
        if m - 1 - k:
            full[k][k] = f"-i*{m - 1 - k}*dt({h})/{h}"
    for j in range(m):
        top = [f"{_wrap(v)}*{_monomial(al)}" for (jj, al), v in coeffs.items() if jj == j]
        prim = [f"{_wrap(v)}*{_monomial(al)}" for (jj, al), v in coeffs.items()
                if jj == j and jj + sum(al) == m]
        if top:
            full[m - 1][j] = f"-({' + '.join(top)})/pow({h}, {m - 1 - j})"
        if prim:
            prin[m - 1][j] = f"-({' + '.join(prim)})/pow(abs_xi, {m - 1 - j})"
    homogeneous = all(j + sum(al) == m for (j, al) in coeffs)
    sys = HyperbolicSystem(
        name=name, A=ExpressionSymbol(full, n), A1=ExpressionSymbol(prin, n, homogeneous=True),
        zone=zone, gamma=gamma,
        params=dict(params or {}, kind="higher-order", m=m, homogeneous=homogeneous,
                    coeffs=[[j, list(al), v] for (j, al), v in sorted(coeffs.items())]))
    _check_real_distinct(sys)
    return sys


def characteristic_roots(system, t, xi):
    """Sorted real parts of the eigenvalues of A1 (no checks)."""
    w = np.linalg.eigvals(system.A1.values(t, xi))
    return np.sort(w.real, axis=-1), np.abs(w.imag).max(axis=-1)


def _check_real_distinct(system):
    tt = _probe_times()
    dirs = sphere_directions(system.n, 8)
    T = np.repeat(tt, len(dirs))
    X = np.tile(dirs, (len(tt), 1))
    lam, im = characteristic_roots(system, T, X)
    scale = np.abs(lam).max(axis=-1)
    if np.any(im > 1e-8 * scale):
        raise HyperbolicityError("complex characteristic roots on probe grid")
    if lam.shape[-1] > 1 and np.any(np.diff(lam, axis=-1).min(axis=-1) <= 1e-10 * scale):
        raise HyperbolicityError("colliding characteristic roots on probe grid")


def condition_4_14(system, xi=None, T_max=1e4, horizons=(1e2, 1e3, 1e4), p=16):
    """sup over T, xi and j of |sum_{k != j} int_0^T d_t lam_j / (lam_j - lam_k) dt|.

    Returned per horizon so that boundedness can be judged by non-growth.
    """
    from .spectral import spectral_jets
    if xi is None:
        xi = sphere_directions(system.n, 8)
    xi = np.asarray(xi, dtype=float).reshape(-1, system.n)
    grid = PanelGrid(panel_edges(0.0, T_max, breakpoints=horizons, rel=0.5), p)
    nodes = grid.flat
    sp = J.get_space((0,), 1)
    by_h = {float(h): 0.0 for h in horizons}
    for x in xi:
        X = np.broadcast_to(x, (len(nodes), system.n))
        sj = spectral_jets(system.A1.jet(nodes, X, sp))
        lam = sj.lam.value
        dlam = J.derivative(sj.lam, 0).value
        m = lam.shape[-1]
        g = np.zeros_like(lam)
        for j in range(m):
            for k in range(m):
                if k != j:
                    g[:, j] += dlam[:, j] / (lam[:, j] - lam[:, k])
        cum = grid.cumulative(g.reshape(grid.n_panels, p, m)).reshape(-1, m)
        for h in horizons:
            sel = nodes <= h * (1 + 1e-12)
            by_h[float(h)] = max(by_h[float(h)], float(np.abs(cum[sel]).max()))
    return by_h


# ---------------------------------------------------------------------------
# named families

SLOW_OSC = "2 + cos(log(e + t))"


def _dirac_system(name, speed, theta, beta, delta, zone, extra=None, gamma="0"):
    """2x2 symmetric system a(t) S(R_theta(t) xi) + B(t) in n = 2.

    S(xi) = [[xi1, xi2], [xi2, -xi1]] has roots +-|xi|; the rotation makes
    the eigenvectors time dependent.  B = beta sigma_x + i delta I.
    """
    a, c, s = _wrap(speed), f"cos({theta})", f"sin({theta})"
    p1 = f"({c}*xi[1] + {s}*xi[2])"
    p2 = f"({c}*xi[2] - {s}*xi[1])"
    prin = [[f"{a}*{p1}", f"{a}*{p2}"], [f"{a}*{p2}", f"-{a}*{p1}"]]
    full = [[f"{prin[0][0]} + i*{_wrap(delta)}", f"{prin[0][1]} + {_wrap(beta)}"],
            [f"{prin[1][0]} + {_wrap(beta)}", f"{prin[1][1]} + i*{_wrap(delta)}"]]
    return HyperbolicSystem(
        name=name, A=ExpressionSymbol(full, 2), A1=ExpressionSymbol(prin, 2, homogeneous=True),
        zone=zone, gamma=gamma, hermitian_principal=True, isotropic=True,
        params=dict(extra or {}, kind="differential-system", speed=speed, theta=theta,
                    beta=beta, delta=delta))


def wave_slow_osc(speed=SLOW_OSC, theta="sin(log(e + t))/2", beta="1/(1 + t)",
                  delta="1/(1 + t)**2", N=1.0, nu=0.0):
    """Wave-type system with speed 2 + cos(log(e + t)) and integrable Im B."""
    return _dirac_system("wave_slow_osc", speed, theta, beta, delta, ZoneParams(N, nu))


def wave_constant(speed="2", N=1.0, nu=0.0):
    """Constant-coefficient control: 2 S(xi), B = 0."""
    return _dirac_system("wave_constant", speed, "0", "0", "0", ZoneParams(N, nu))


def a3_violating(speed="2", sign=-1.0, N=1.0, nu=0.0):
    """Constant principal part with B = sign * i (1 + t)^(-1/2) I.

    The drift is not integrable, so the energy is unbounded (sign = -1
    amplifies, sign = +1 damps).
    """
    delta = f"{_num(sign)}*pow(1 + t, -0.5)"
    return _dirac_system("a3_violating", speed, "0", "0", delta, ZoneParams(N, nu),
                         extra={"sign": sign})


def toy_nu1(N=1.0):
    """Oscillating-zone toy (nu = 1): speed varying on the scale log(e + t)^2."""
    speed = "2 + cos(log(e + t)**2)/2"
    beta = "log(e + t)/(1 + t)"
    return _dirac_system("toy_nu1", speed, "0", beta, "1/(1 + t)**2", ZoneParams(N, 1.0))


def wave_second_order(speed=SLOW_OSC, N=1.0, nu=0.0, c="0"):
    """u_tt = a(t)^2 Laplacian u written for U = (h u, D_t u), n = 2."""
    a2 = f"({speed})**2"
    sys = build_second_order([[a2, "0"], ["0", a2]], ["0", "0"], c=c, zone=ZoneParams(N, nu),
                             name="wave_second_order", params={"speed": speed})
    sys.isotropic = True
    return sys


def ho3_homogeneous(N=1.0):
    """Third order, n = 1, roots c_j(t) xi with c_j = j + cos(log(e + t))/4."""
    cs = [f"({j} + cos(log(e + t))/4)" for j in (1, 2, 3)]
    e1 = f"-({cs[0]} + {cs[1]} + {cs[2]})"
    e2 = f"({cs[0]}*{cs[1]} + {cs[0]}*{cs[2]} + {cs[1]}*{cs[2]})"
    e3 = f"-({cs[0]}*{cs[1]}*{cs[2]})"
    coeffs = {(2, (1,)): e1, (1, (2,)): e2, (0, (3,)): e3}
    return build_higher_order(3, coeffs, 1, name="ho3_homogeneous", zone=ZoneParams(N, 0.0))


def ho4_isotropic(N=1.0):
    """(tau^2 - c1^2 |xi|^2)(tau^2 - c2^2 |xi|^2) with c1 = 1 + cos(log(e+t))/4, c2 = 2 c1."""
    c1 = "(1 + cos(log(e + t))/4)"
    s = f"(5*{c1}**2)"
    p = f"(4*{c1}**4)"
    coeffs = {(2, (2, 0)): f"-{s}", (2, (0, 2)): f"-{s}",
              (0, (4, 0)): p, (0, (2, 2)): f"2*{p}", (0, (0, 4)): p}
    sys = build_higher_order(4, coeffs, 2, name="ho4_isotropic", zone=ZoneParams(N, 0.0))
    sys.isotropic = True
    return sys


FAMILIES = {
    "wave_slow_osc": wave_slow_osc,
    "wave_constant": wave_constant,
    "a3_violating": a3_violating,
    "toy_nu1": toy_nu1,
    "wave_second_order": wave_second_order,
    "ho3_homogeneous": ho3_homogeneous,
    "ho4_isotropic": ho4_isotropic,
}


def get_family(name, **overrides):
    if name not in FAMILIES:
        raise ConfigError(f"unknown system family {name!r}; known: {sorted(FAMILIES)}")
    try:
        return FAMILIES[name](**overrides)
    except TypeError as exc:
        raise ConfigError(f"bad overrides for {name!r}: {exc}") from None
