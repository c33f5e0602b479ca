import numpy as np
import pytest
from hypothesis import given, strategies as st

from disphyp.dispersive import (GridConfig, check_guard, decay_measurement, export_norms_csv,
                                fft_data, filtered_quadrature, fit_exponent, gaussian_data,
                                grid_solve, ifft_data, lq_norm, predicted_exponent,
                                sobolev_norm)
from disphyp.errors import GridError
from disphyp.example_systems import get_family
from disphyp.symbols import cutoff_chi


@pytest.mark.parametrize("kw", [{"n": 4}, {"points": 1000}, {"pq": ((2.0, 3.0),)},
                                {"pq": ((0.9, -9.0),)}])
def test_grid_config_validation(kw):
    with pytest.raises(GridError):
        GridConfig(**kw)


def test_wraparound_guard(const):
    g = GridConfig(points=64, L=20.0)
    with pytest.raises(GridError):
        check_guard(const, gaussian_data(g, sigma=2.0), g, 10.0)


def test_zero_time_and_l2_conservation(const):
    g = GridConfig(points=128, L=64.0)
    U = gaussian_data(g, sigma=2.0)
    s = grid_solve(const, U, g, [0.0, 5.0])
    assert np.array_equal(s.fields[0.0], U)
    assert abs(lq_norm(s.fields[5.0], g, 2) / lq_norm(U, g, 2) - 1) <= 1e-12


def test_magnus_converges_to_direct(wave):
    g = GridConfig(points=16, L=8.0)
    U = gaussian_data(g, sigma=1.5) + 0.3j * gaussian_data(g, sigma=1.0, component=1)
    ref = grid_solve(wave, U, g, [10.0], backend="direct", guard=False).fields[10.0]
    errs = []
    for h in (0.2, 0.1):
        g.h_max = g.step_factor = h
        errs.append(np.abs(grid_solve(wave, U, g, [10.0], guard=False).fields[10.0] - ref).max())
    assert errs[1] <= 1e-6
    assert errs[0] / errs[1] >= 10          # fourth order: ideally 16


def test_unknown_backend(wave):
    g = GridConfig(points=16, L=8.0)
    with pytest.raises(GridError):
        grid_solve(wave, gaussian_data(g), g, [1.0], backend="rk4", guard=False)


def test_gaussian_norms():
    g = GridConfig(points=512, L=60.0)
    G = gaussian_data(g, sigma=5.0, m=1)
    assert abs(sobolev_norm(G, g, 2, 1) / np.sqrt(26 * np.pi) - 1) <= 1e-4
    assert abs(sobolev_norm(G, g, 2, 1, homogeneous=True) / np.sqrt(np.pi) - 1) <= 1e-4
    for q in (1.5, 4.0):
        assert abs(lq_norm(G, g, q) / (2 * np.pi * 25 / q) ** (1 / q) - 1) <= 1e-10
    with pytest.raises(ValueError):
        sobolev_norm(G, g, 2, -1)


def test_fft_round_trip(rng):
    g = GridConfig(points=64, L=10.0)
    U = rng.standard_normal((64, 64, 2)) + 1j * rng.standard_normal((64, 64, 2))
    assert np.abs(ifft_data(fft_data(U, g), g) - U).max() <= 1e-12


@given(st.floats(1.0, 4.0))
def test_lq_dilation_scaling(c):
    # ||f(./c)||_q = c^(n/q) ||f||_q for the n = 2 Gaussian
    g = GridConfig(points=256, L=80.0)
    a = lq_norm(gaussian_data(g, sigma=2.0, m=1), g, 4.0)
    b = lq_norm(gaussian_data(g, sigma=2.0 * c, m=1), g, 4.0)
    assert abs(b / a - c ** 0.5) <= 1e-8


def test_fit_exponent_and_prediction():
    t = np.geomspace(5, 100, 12)
    assert abs(fit_exponent(t, 3 * t ** -0.5) + 0.5) <= 1e-12
    assert predicted_exponent(2, 2, 4 / 3, 4.0) == pytest.approx(-0.25)
    assert predicted_exponent(2, 4, 4 / 3, 4.0, convex=False) == pytest.approx(-0.125)
    with pytest.raises(GridError):
        fit_exponent([5.0], [1.0])


def test_decay_measurement_needs_a_decade(const, tmp_path):
    g = GridConfig(points=32, L=16.0, times=tuple(np.geomspace(5.0, 20.0, 8)))
    s = grid_solve(const, gaussian_data(g, sigma=1.0), g, g.times, guard=False)
    with pytest.raises(GridError):
        decay_measurement(s)


def test_decay_report_and_csv(const, tmp_path):
    g = GridConfig(points=32, L=16.0, times=tuple(np.geomspace(5.0, 50.0, 8)))
    U = gaussian_data(g, sigma=1.0)
    s = grid_solve(const, U, g, g.times, guard=False)
    rep = decay_measurement(s, data=U)
    assert len(rep.entries) == 1 and np.isfinite(rep.entries[0].data_norm)
    rows = export_norms_csv(rep, tmp_path / "n.csv").read_text().splitlines()
    assert len(rows) == 1 + 8


@pytest.mark.parametrize("name", ["wave_constant", "wave_slow_osc"])
def test_filtered_quadrature_oracle(name):
    sys = get_family(name)
    g = GridConfig(points=256, L=200.0)
    sig, t = 5.0, 1.0
    U = gaussian_data(g, sigma=sig)

    def hat(XI):
        v = np.zeros((len(XI), 2), complex)
        v[:, 0] = 2 * np.pi * sig ** 2 * np.exp(-sig ** 2 * np.sum(XI ** 2, 1) / 2)
        return v
    s = grid_solve(sys, U, g, [t], guard=False)
    F = ifft_data(s.hat[t] * cutoff_chi(t, g.xi_grid(), sys.zone, "pd")[..., None], g)
    idx = [(128, 128), (140, 120), (100, 150)]
    xs = np.array([g.x_grid()[i] for i in idx])
    q = filtered_quadrature(sys, hat, sys.zone, t, xs, n_rho=128, n_ang=128)
    assert np.abs(q - np.array([F[i] for i in idx])).max() <= 1e-6


def test_constant_plane_wave_superposition(const):
    from scipy.linalg import expm
    g = GridConfig(points=32, L=16.0)
    x = g.x_grid()
    k = np.array([ax[[3, -5]] for ax in g.xi_axes()]).T     # two grid frequencies
    vs = [np.array([1.0, 0.5j]), np.array([-0.3, 2.0])]
    U0 = sum(np.exp(1j * x @ kk)[..., None] * v for kk, v in zip(k, vs))
    t = 10.0
    exact = sum(np.exp(1j * x @ kk)[..., None] * (expm(1j * t * const.A.values(t, kk[None])[0]) @ v)
                for kk, v in zip(k, vs))
    got = grid_solve(const, U0, g, [t], guard=False).fields[t]
    assert np.abs(got - exact).max() <= 1e-6


def test_no_low_frequencies_means_no_filtered_piece(const):
    # transform vanishes on the disc |xi| <= 2N that carries the cutoff at t = 0
    N = const.zone.N

    def U0_hat(xi):
        r = np.linalg.norm(xi, axis=-1)
        out = np.zeros(xi.shape[:-1] + (2,), dtype=complex)
        out[..., 0] = np.where(r > 2 * N, np.exp(-r ** 2), 0.0)
        return out

    v = filtered_quadrature(const, U0_hat, const.zone, 0.0, np.array([[0.0, 0.0], [1.0, -2.0]]),
                            n_rho=32, n_ang=32)
    assert np.abs(v).max() <= 1e-14


@given(st.floats(0.5, 3.0), st.floats(0.0, 1.0))
def test_lq_log_convexity(sigma, shift):
    g = GridConfig(points=64, L=16.0)
    U = gaussian_data(g, sigma=sigma) + shift * gaussian_data(g, sigma=2 * sigma, component=1)
    assert lq_norm(U, g, 2) <= (lq_norm(U, g, 4) * lq_norm(U, g, 4 / 3)) ** 0.5 * (1 + 1e-12)


def test_theorem_hypotheses_flag():
    from disphyp.dispersive import theorem_hypotheses
    assert theorem_hypotheses(2, 2)["inside"]
    assert theorem_hypotheses(3, 1, (6, 12))["inside"]
    flag = theorem_hypotheses(3, 1, (2, 6))
    assert not flag["inside"] and flag["note"] == "outside theorem hypotheses"


def test_drift_xi_independence(const):
    from disphyp.dispersive import drift_is_xi_independent
    assert drift_is_xi_independent(const)
    assert not drift_is_xi_independent(get_family("wave_slow_osc"))
