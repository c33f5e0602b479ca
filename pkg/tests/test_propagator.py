import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from disphyp.diagonalizer import build_hierarchy
from disphyp.errors import ZoneError
from disphyp.example_systems import get_family
from disphyp.propagator import (FactorizedPropagator, PropagatorHandle, _Setup, band_envelopes,
                                cocycle_residual, energy_two_sided, liouville_residual, pd_zone_bounds,
                                phases, qk_derivative_bounds, regular_samples, representation_bands,
                                solve_direct)
from disphyp.quadrature import PanelGrid, panel_edges
from disphyp.symbols import ExpressionSymbol, ZoneParams
from disphyp.system import HyperbolicSystem

from conftest import golden


@pytest.fixture(scope="module")
def wave_fp(wave, wave_h):
    return FactorizedPropagator(wave_h, wave)


def test_constant_matches_expm(const, rng):
    xi = rng.standard_normal((10, 2))
    E = solve_direct(const, 5.0, 1.0, xi, rtol=1e-12, atol=1e-14)
    for x, e in zip(xi, E):
        A = const.A.values(0.0, x)
        assert np.abs(e - expm(4j * A)).max() <= 1e-10


def test_scalar_closed_form():
    sym = ExpressionSymbol([["(2 + sin(t))*xi[1]"]], 1)
    sys = HyperbolicSystem("scalar", sym, ExpressionSymbol([["(2 + sin(t))*xi[1]"]], 1, True))
    E = solve_direct(sys, 7.0, 0.5, np.array([1.3]))
    phase = 1.3 * (2 * 6.5 - np.cos(7.0) + np.cos(0.5))
    assert abs(E[0, 0] - np.exp(1j * phase)) <= 1e-10


def test_identity_at_equal_times(wave):
    assert np.array_equal(solve_direct(wave, 3.0, 3.0, np.array([0.2, 0.1])), np.eye(2))


def test_unitary_for_self_adjoint(rng):
    sys = get_family("wave_slow_osc", delta="0")
    xi = rng.standard_normal((20, 2))
    E = solve_direct(sys, 40.0, 0.0, xi)
    V = rng.standard_normal((20, 2)) + 1j * rng.standard_normal((20, 2))
    EV = np.einsum("pij,pj->pi", E, V)
    assert np.abs(np.linalg.norm(EV, axis=1) - np.linalg.norm(V, axis=1)).max() <= 1e-9


@settings(max_examples=8)
@given(st.floats(0, 20), st.floats(0, 20), st.floats(0, 20), st.floats(0.05, 3), st.floats(0, 6.3))
def test_cocycle_and_liouville(a, b, c, r, ang):
    sys = get_family("wave_slow_osc")
    r_, s_, t_ = sorted([a, b, c])
    xi = r * np.array([np.cos(ang), np.sin(ang)])
    prop = PropagatorHandle(sys)
    assert cocycle_residual(prop, t_, s_, r_, xi) <= 1e-7
    E = prop(t_, s_, xi)
    assert liouville_residual(sys, E, t_, s_, xi).max() <= 1e-7


def test_factorized_vs_direct_regular(wave, wave_fp):
    t, s, xi = regular_samples(wave, wave_fp.zone, 40, np.random.default_rng(5))
    err = np.linalg.norm(wave_fp(t, s, xi) - solve_direct(wave, t, s, xi), 2, axis=(-2, -1))
    assert err.max() <= 1e-7


def test_factorized_splices_pd_zone(wave, wave_fp):
    xi = np.array([[0.05, 0.02], [0.3, -0.2]])
    tx, _ = wave_fp.boundaries(xi)
    t = tx + 20.0
    Ef = wave_fp(t, np.zeros(2), xi)
    Eb = wave_fp(np.zeros(2), t, xi)
    assert np.abs(Ef - solve_direct(wave, t, 0.0, xi)).max() <= 1e-7
    assert np.abs(Eb - solve_direct(wave, 0.0, t, xi)).max() <= 1e-7
    with pytest.raises(ZoneError):
        wave_fp(t, np.zeros(2), xi, hyp_only=True)


def test_pd_backend_refuses_hyperbolic_points(wave):
    h = PropagatorHandle(wave, backend="pd-zone")
    with pytest.raises(ZoneError):
        h(100.0, 0.0, np.array([1.0, 0.0]))


def test_zero_remainder_gives_identity_Q(const):
    fp = FactorizedPropagator(build_hierarchy(const, k=2), const)
    st_ = fp._setup(30.0, 2.0, np.array([1.0, 0.5]))
    q = fp.q_peano_baker(st_)
    assert q.converged and np.abs(q.Q[-1] - np.eye(2)).max() == 0.0


def test_peano_baker_commuting_case(wave_fp):
    g = PanelGrid(panel_edges(1.0, 9.0, rel=0.25, max_len=0.5), 20)
    n = g.flat.size
    R = np.broadcast_to(np.diag([0.3, -0.7]).astype(complex), (n, 2, 2)).copy()
    st_ = _Setup(g, np.zeros((n, 2)), np.zeros((n, 2, 2)), R, None, np.zeros((n, 2)))
    q = wave_fp.q_peano_baker(st_)
    assert np.abs(q.Q[-1] - np.diag(np.exp(1j * np.array([0.3, -0.7]) * 8.0))).max() <= 1e-12


def test_peano_baker_vs_ode_and_self_consistency(wave, wave_fp):
    xi = np.array([0.8, -0.3])
    _, ttx = wave_fp.boundaries(xi)
    s = float(ttx[0]) + 2.0
    st_ = wave_fp._setup(s + 30.0, s, xi)
    q = wave_fp.q_peano_baker(st_)
    Qo, _ = wave_fp.q_ode(s + 30.0, s, xi)
    assert np.abs(q.Q[-1] - Qo).max() <= 1e-8
    q2 = wave_fp.q_peano_baker(st_, tol=0.5 * wave_fp.pb_tol)
    assert np.abs(q2.Q[-1] - q.Q[-1]).max() <= max(q.error, 1e-15)


@given(st.floats(1, 200), st.floats(0.05, 5), st.floats(0, 6.3), st.floats(0.1, 10))
def test_phase_homogeneity(t, r, ang, c):
    sys = get_family("wave_slow_osc")
    xi = r * np.array([np.cos(ang), np.sin(ang)])
    a, b = phases(sys, t, c * xi).values, c * phases(sys, t, xi).values
    assert np.abs(a - b).max() <= 1e-10 * np.abs(b).max()


def test_energy_unitary_and_golden(const, wave):
    rep = energy_two_sided(const, const.zone, count=300, seed=0)
    assert abs(rep.C_low - 1) <= 1e-9 and abs(rep.C_high - 1) <= 1e-9
    rep = energy_two_sided(wave, wave.zone, count=1000, seed=0)
    g = golden("energy")
    assert rep.C_star == pytest.approx(g["wave_C_star_1000"], rel=1e-7)
    assert not rep.monotone_growth


def test_energy_growth_for_violating_system():
    sys = get_family("a3_violating")
    rep = energy_two_sided(sys, sys.zone, count=600, seed=0)
    assert rep.monotone_growth


def test_pd_zone_bounds(const, wave):
    r = np.geomspace(1e-3, 1.0, 8)
    xi = np.stack([r, np.zeros_like(r)], axis=1)
    rep = pd_zone_bounds(const, const.zone, xi, alpha_max=0)
    assert np.allclose(rep.E_norms, 1.0, atol=1e-9) and rep.C_prime == 0.0
    rep = pd_zone_bounds(wave, wave.zone, xi, alpha_max=1)
    assert max(rep.E_norms) < 10 and rep.violations == 0
    for a, slope in rep.deriv_slopes.items():
        assert slope >= -1.1


def test_representation_bands(wave, wave_fp, const):
    xi = np.array([1.2, 0.4])
    for t, mode in [(80.0, "split"), (0.5, "uniform")]:
        rb = representation_bands(wave, wave_fp, t, xi)
        assert rb.mode == mode and rb.residual <= 1e-7
    fpc = FactorizedPropagator(build_hierarchy(const, k=2), const)
    b1 = representation_bands(const, fpc, 30.0, xi, mode="split").bands
    b2 = representation_bands(const, fpc, 60.0, xi, mode="split").bands
    assert np.abs(b1 - b2).max() <= 1e-9


def test_band_envelope_slopes(wave, wave_fp):
    r = np.geomspace(0.5, 4.0, 4)
    xi = np.stack([r * 0.6, r * 0.8], axis=1)
    for fit in band_envelopes(wave, wave_fp, 60.0, xi, alpha_max=2):
        assert fit.passed, fit.as_dict()


def test_qk_derivative_bounds(wave_fp):
    r = np.geomspace(2e-3, 4.0, 8)
    xi = np.stack([r, 0.3 * r], axis=1)
    rep = qk_derivative_bounds(wave_fp, xi, alpha_max=1, zone="reg")
    assert all(v["slope_ok"] and v["envelope_ok"] for v in rep["alphas"].values())


def test_qk_osc_envelope_nu1():
    sys = get_family("toy_nu1")
    fp = FactorizedPropagator(build_hierarchy(sys, k=1), sys)
    r = np.geomspace(0.3, 2.0, 5) * fp.zone.N
    xi = np.stack([r, np.zeros_like(r)], axis=1)
    rep = qk_derivative_bounds(fp, xi, alpha_max=1, zone="osc")
    assert all(v["envelope_ok"] for v in rep["alphas"].values())
