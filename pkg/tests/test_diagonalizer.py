import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from disphyp.diagonalizer import (ExpressionSource, build_hierarchy, check_remainder_class,
                                  default_level, initial_remainder, verify_operator_identity)
from disphyp.errors import ZoneConstantError
from disphyp.example_systems import get_family
from disphyp.propagator import regular_samples
from disphyp.symbols import SymbolClassSpec, boundary_time, check_symbol_class, symbol_grid

from conftest import golden


def _hyp_grid(zp, t_max=1e4, n=2):
    gt, gx = symbol_grid(n, zp, n_times=16, t_max=t_max, per_shell=2, shells=12, n_dirs=4)
    hyp = gt >= boundary_time(np.linalg.norm(gx, axis=1), zp)
    return gt[hyp], gx[hyp]


def test_default_level():
    assert default_level(2) == 2 and default_level(3) == 3 and default_level(1) == 2


def test_structure_of_levels(wave_h, rng):
    t, _, xi = regular_samples(wave_h.source.system, wave_h.eff_zone, 50, rng)
    ev = wave_h.evaluate(t, xi)
    off = ~np.eye(2, dtype=bool)
    for F in ev["F_levels"]:
        assert np.all(F[..., off] == 0)
    for N in ev["N_levels"]:
        assert np.all(np.diagonal(N, axis1=-2, axis2=-1) == 0)
    assert np.linalg.norm(ev["N"] - np.eye(2), 2, axis=(-2, -1)).max() <= 0.5


def test_zero_remainder_terminates(const, rng):
    h = build_hierarchy(const, k=2)
    t, _, xi = regular_samples(const, h.eff_zone, 20, rng)
    ev = h.evaluate(t, xi)
    assert np.all(ev["R0"] == 0) and np.all(ev["R"] == 0)
    assert np.all(ev["N"] == np.eye(2))
    assert verify_operator_identity(h, t, xi).max_residual == 0.0


def test_toy_against_symbolic_expansion():
    r = 0.3
    src = ExpressionSource(["-abs_xi", "abs_xi"], [["0", str(r)], [str(r), "0"]], 2)
    h = build_hierarchy(src, k=2)
    rho = sp.symbols("rho", positive=True)
    D = sp.diag(-rho, rho)
    rs = sp.Rational(3, 10)
    R0 = sp.Matrix([[0, rs], [rs, 0]])
    lam = [-rho, rho]
    B, N, F = R0, sp.eye(2), sp.zeros(2)
    for _ in range(2):
        Fj = sp.diag(B[0, 0], B[1, 1])
        Nj = sp.Matrix(2, 2, lambda a, b: 0 if a == b else -B[a, b] / (lam[a] - lam[b]))
        N, F = N + Nj, F + Fj
        # r and rho are t-independent, so D_t N = 0
        B = -(N * D - D * N) + R0 * N - N * F
    Rk = sp.simplify(N.inv() * B)
    assert sp.simplify((-D - R0) * N - N * (-D - F - Rk)) == sp.zeros(2)
    xi = np.array([[1.5, 0.0], [0.0, 4.0], [2.0, 2.0]])
    t = np.array([0.0, 3.0, 10.0])
    ev = h.evaluate(t, xi)
    for i, x in enumerate(xi):
        rv = np.linalg.norm(x)
        ref = np.array(Rk.subs(rho, rv).evalf(30), dtype=complex)
        assert np.abs(ev["R"][i] - ref).max() <= 1e-14
        N1 = np.array([[0, r / (2 * rv)], [-r / (2 * rv), 0]])
        assert np.abs(ev["N_levels"][0][i] - N1).max() <= 1e-15
    rep = verify_operator_identity(h, t, xi)
    assert rep.max_residual <= 1e-10


def test_identity_wave_1000_points(wave_h, rng):
    t, _, xi = regular_samples(wave_h.source.system, wave_h.eff_zone, 1000, rng)
    rep = verify_operator_identity(wave_h, t, xi)
    assert rep.passed and rep.max_relative <= 1e-8 and rep.scheme_residual <= 1e-12


def test_R0_class_golden(wave):
    zp = wave.zone
    rep = check_symbol_class(initial_remainder(wave), SymbolClassSpec(0, 1, 1, 1), zp,
                             _hyp_grid(zp))
    g = golden("remainder_classes")["R0"]
    assert rep.passed
    for k, v in rep.as_dict()["constants"].items():
        assert v == pytest.approx(g[k], rel=1e-6, abs=1e-12)


def test_R2_class_golden_and_ladder(wave_h):
    zp = wave_h.eff_zone
    lo = check_remainder_class(wave_h, zp, *_hyp_grid(zp, 1e3))
    hi = check_remainder_class(wave_h, zp, *_hyp_grid(zp, 1e4))
    assert hi.passed
    g = golden("remainder_classes")["R2"]
    for k, v in hi.as_dict()["constants"].items():
        assert v == pytest.approx(g[k], rel=1e-6, abs=1e-12)
        assert v <= 1.25 * lo.as_dict()["constants"][k] + 1e-12


def test_F_minus_F0_class(wave_h):
    zp = wave_h.eff_zone
    t, xi = _hyp_grid(zp)
    ttx = boundary_time(np.linalg.norm(xi, axis=1), zp, doubled=True)
    sel = t >= ttx
    rep = check_symbol_class(wave_h.symbol("F_minus_F0"), SymbolClassSpec(-1, 2, 1, 1), zp,
                             (t[sel], xi[sel]))
    assert rep.passed


def test_zone_constant_ceiling():
    # a remainder of size ~ 1e3 cannot be made contractive within a ceiling factor of 4
    src = ExpressionSource(["-abs_xi", "abs_xi"], [["0", "1000"], ["1000", "0"]], 2)
    with pytest.raises(ZoneConstantError):
        build_hierarchy(src, k=1, ceiling_factor=4.0)


@given(st.integers(1, 3), st.floats(0.05, 2.0))
def test_identity_holds_at_every_level(k, r):
    src = ExpressionSource(["-2*abs_xi", "abs_xi/(1 + t)"],
                           [[f"{r}/(1 + t)", f"{r}*cos(t)/(1 + t)"],
                            [f"{r}/(2 + t)**2", "0"]], 2)
    h = build_hierarchy(src, k=k)
    t = np.array([1.0, 10.0, 100.0])
    xi = np.array([[5.0, 1.0], [1.0, -3.0], [0.5, 0.5]]) * h.N_eff
    assert verify_operator_identity(h, t, xi, tol=1e-10).passed
