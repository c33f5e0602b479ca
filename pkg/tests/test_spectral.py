import numpy as np
import pytest
from hypothesis import given, strategies as st

from disphyp import jets as J
from disphyp.errors import HyperbolicityError, StrictHyperbolicityError
from disphyp.example_systems import build_differential_system, get_family
from disphyp.spectral import check_assumptions, compute_F0, decompose, spectral_jets
from disphyp.symbols import ExpressionSymbol, SymbolClassSpec, ZoneParams, check_symbol_class, symbol_grid

from conftest import golden


def test_symmetric_2x2():
    r = 1.7
    d = decompose(np.array([[0, r], [r, 0]]))
    assert np.allclose(d.roots, [-r, r], atol=1e-14)
    assert np.allclose(d.projections[0], 0.5 * np.array([[1, -1], [-1, 1]]), atol=1e-12)
    assert np.allclose(d.projections[1], 0.5 * np.array([[1, 1], [1, 1]]), atol=1e-12)


def test_diagonal_input():
    d = decompose(np.diag([3.0, -1.0, 2.0]))
    assert np.allclose(d.roots, [-1, 2, 3])
    assert np.allclose(np.abs(d.M), np.eye(3)[:, [1, 2, 0]])


def test_errors():
    with pytest.raises(StrictHyperbolicityError):
        decompose(np.eye(2))
    with pytest.raises(HyperbolicityError):
        decompose(np.array([[0, 1], [-1, 0]]))


def _random_hyperbolic(seed, m):
    rng = np.random.default_rng(seed)
    lam = np.sort(rng.uniform(-5, 5, m)) + np.arange(m)
    V = rng.standard_normal((m, m)) + np.eye(m) * 3
    return V @ np.diag(lam) @ np.linalg.inv(V), lam


@given(st.integers(0, 10 ** 6), st.integers(2, 4))
def test_decomposition_invariants(seed, m):
    A, lam = _random_hyperbolic(seed, m)
    d = decompose(A)
    nA = np.linalg.norm(A)
    I = np.eye(m)
    assert np.allclose(d.roots, lam, atol=1e-9 * nA)
    assert np.abs(sum(d.projections) - I).max() <= 1e-10 * max(1, np.linalg.cond(d.M))
    for i in range(m):
        assert np.abs(A @ d.projections[i] - d.roots[i] * d.projections[i]).max() <= 1e-9 * nA
        for j in range(m):
            target = d.projections[j] if i == j else 0
            assert np.abs(d.projections[i] @ d.projections[j] - target).max() <= 1e-9
    assert np.abs(A @ d.M - d.M @ d.D).max() <= 1e-9 * nA
    assert np.abs(d.M @ d.Minv - I).max() <= 1e-10
    assert np.abs(sum(l * P for l, P in zip(d.roots, d.projections)) - A).max() <= 1e-9 * nA


def test_wave_roots_vs_eigensolver(wave, rng):
    t = rng.uniform(0, 1e3, 200)
    xi = rng.standard_normal((200, 2))
    A1 = wave.A1.values(t, xi)
    sj = spectral_jets(J.Jet(J.get_space((), 0), A1[None]))
    ref = np.sort(np.linalg.eigvals(A1).real, axis=-1)
    a = 2 + np.cos(np.log(np.e + t))
    r = np.linalg.norm(xi, axis=1)
    assert np.abs(sj.lam.value - ref).max() <= 1e-10 * r.max() * 3
    assert np.abs(sj.lam.value[:, 1] - a * r).max() <= 1e-10 * r.max() * 3


@given(st.floats(0, 100), st.floats(0.1, 5), st.floats(0, 6.28), st.floats(0.2, 5))
def test_spectral_homogeneity(t, r, ang, c):
    A1 = get_family("wave_slow_osc").A1
    xi = r * np.array([np.cos(ang), np.sin(ang)])
    d1 = decompose(A1.values(t, xi))
    d2 = decompose(A1.values(t, c * xi), continuity_ref=d1)
    assert np.allclose(d2.roots, c * d1.roots, rtol=1e-9)
    assert np.abs(d2.projections - d1.projections).max() <= 1e-9


def test_branch_continuity_along_path(wave):
    ts = np.linspace(0, 50, 2001)
    xi = np.array([0.6, -0.8])
    prev = decompose(wave.A1.values(ts[0], xi))
    worst = 0.0
    for t in ts[1:]:
        d = decompose(wave.A1.values(t, xi), continuity_ref=prev)
        worst = max(worst, np.abs(d.M - prev.M).max() / (ts[1] - ts[0]))
        prev = d
    assert worst < 5.0


def test_imag_F0_vanishes_for_symmetric(const, rng):
    t = rng.uniform(0, 100, 50)
    xi = rng.standard_normal((50, 2))
    assert np.abs(compute_F0(const, t, xi).imag).max() <= 1e-8
    wave0 = get_family("wave_slow_osc", beta="0", delta="0")
    assert np.abs(compute_F0(wave0, t, xi).imag).max() <= 1e-8


def test_scalar_imaginary_shift(rng):
    beta = "1/(1 + t)**2"
    s = get_family("wave_constant")
    sys = build_differential_system([[["1", "0"], ["0", "-1"]], [["0", "1"], ["1", "0"]]],
                                    [[f"i*{beta}", "0"], ["0", f"i*{beta}"]])
    t = rng.uniform(0, 20, 30)
    xi = rng.standard_normal((30, 2))
    F0 = compute_F0(sys, t, xi)
    assert np.allclose(F0.imag, (1 / (1 + t) ** 2)[:, None], atol=1e-12)
    assert s is not None


def test_inverse_gap_class(wave):
    zp = wave.zone
    g = symbol_grid(2, zp, n_times=8, per_shell=2, shells=10, n_dirs=4)
    inv = ExpressionSymbol([["1/(2*(2 + cos(log(e + t)))*abs_xi)"]], 2)
    from disphyp.symbols import boundary_time
    hyp = g[0] >= boundary_time(np.linalg.norm(g[1], axis=1), zp)
    rep = check_symbol_class(inv, SymbolClassSpec(-1, 0, 1, 1), zp, (g[0][hyp], g[1][hyp]))
    assert rep.passed and max(rep.constants.values()) < 10


def test_assumptions_constant_system(const):
    rep = check_assumptions(const)
    assert rep.passed and rep.a3_sup == 0.0 and rep.a4_min_eig >= -1e-12


def test_assumptions_wave_golden(wave):
    rep = check_assumptions(wave)
    assert rep.passed
    assert rep.a3_sup == pytest.approx(golden("assumptions_wave")["a3_sup"], rel=1e-8)


def test_assumptions_a3_violation():
    rep = check_assumptions(get_family("a3_violating"))
    assert not rep.a3_pass and not rep.passed
    by = rep.a3_sup_by_horizon
    assert by["10000"] > by["1000"] > by["100"]


def test_second_order_F0_integral_bounded():
    sys = get_family("wave_second_order", c="1/(1 + t)**2")
    rep = check_assumptions(sys)
    assert rep.a3_pass
