import numpy as np
import pytest
from hypothesis import given, strategies as st

from disphyp.errors import DegeneratePhaseError, FitError
from disphyp.fresnel import ExpressionPhase, build_surface
from disphyp.oscillatory import (ModelIntegralSpec, check_conditions, cutoff,
                                 evaluate_model_integral, export_decay_csv, fit_decay,
                                 kernel_decay, surface_kernel)

LAMS = np.geomspace(10.0, 1e4, 12)


def model_fit(src, gamma, N=1):
    spec = ModelIntegralSpec(N, src, gamma)
    vals = [evaluate_model_integral(spec, lam).value for lam in LAMS]
    return fit_decay(LAMS, vals, gamma, N)


def test_cutoff_profile():
    s = np.linspace(0, 1.2, 121)
    c = cutoff(s)
    assert np.all(c[s <= 0.5] == 1) and np.all(c[s >= 1] == 0)
    assert np.all(np.diff(c) <= 0)


def test_zero_amplitude():
    spec = ModelIntegralSpec(1, "xi[1]**2", 2, amplitude=lambda x: 0 * x[0])
    assert evaluate_model_integral(spec, 50.0).value == 0


def test_zero_frequency_area():
    # the cutoff transition is symmetric, so the area is 1.5 times the radius
    spec = ModelIntegralSpec(1, "xi[1]**2", 2)
    assert abs(evaluate_model_integral(spec, 0.0).value - 0.75) <= 1e-12


def test_stationary_phase_oracle():
    # a = chi is flat at the critical point, so all correction terms vanish
    spec = ModelIntegralSpec(1, "xi[1]**2", 2)
    for lam in (1e4,):
        I = evaluate_model_integral(spec, lam)
        assert abs(I.value * np.sqrt(lam / np.pi) - np.exp(1j * np.pi / 4)) <= 1e-10
        assert I.error <= 1e-10 * abs(I.value)


@pytest.mark.parametrize("src, gamma, rate", [("xi[1]**2", 2, -0.5), ("xi[1]**4", 4, -0.25)])
def test_model_rates(src, gamma, rate):
    fit = model_fit(src, gamma)
    assert abs(fit.slope - rate) <= 0.05
    assert fit.bound_holds and fit.passed


def test_two_dimensional_model():
    fit = model_fit("xi[1]**2 + xi[2]**2", 2, N=2)
    assert abs(fit.slope + 1.0) <= 0.05


@given(st.floats(0.1, 2.0), st.floats(0.1, 100.0))
def test_fit_recovers_power_law(rate, amp):
    fit = fit_decay(LAMS, amp * LAMS ** -rate, 2, 1)
    assert abs(fit.slope + rate) <= 1e-10 and fit.bound_holds


def test_fit_errors():
    with pytest.raises(FitError):
        fit_decay(LAMS[:5], LAMS[:5] ** -0.5, 2, 1)
    lam = np.geomspace(10, 1e3, 12)
    with pytest.raises(FitError):
        fit_decay(lam, lam ** -0.5, 2, 1)


def test_check_conditions():
    rep = check_conditions(ModelIntegralSpec(1, "xi[1]**2", 2))
    assert all(rep[k]["passed"] for k in ("F1", "F2", "F3", "F4"))
    rep = check_conditions(ModelIntegralSpec(1, "xi[1]**2 + xi[1]", 2))
    assert not rep["F1"]["passed"]
    rep = check_conditions(ModelIntegralSpec(1, "xi[1]**4", 2))
    assert not rep["F2"]["passed"]


def test_degenerate_phase():
    with pytest.raises(DegeneratePhaseError):
        evaluate_model_integral(ModelIntegralSpec(1, "0*xi[1]", 2), 10.0)


def test_doubling_error_estimate():
    spec = ModelIntegralSpec(2, "xi[1]**2 + xi[2]**4", 4)
    I = evaluate_model_integral(spec, 300.0)
    assert I.error <= 1e-8 * abs(I.value)


@pytest.mark.parametrize("src, n, gamma, bound", [
    ("abs_xi", 2, 2, -0.4), ("(xi[1]**4 + xi[2]**4)**0.25", 2, 4, -0.15)])
def test_kernel_decay(src, n, gamma, bound):
    surf = build_surface(ExpressionPhase(src, n), count=64)
    fit, _ = kernel_decay(surf, int(np.argmax(surf.points[:, 0])), LAMS, gamma)
    assert fit.slope <= bound


def test_kernel_zero_frequency(tmp_path):
    surf = build_surface(ExpressionPhase("abs_xi", 2), count=64)
    J0 = surface_kernel(surf, 0, 0.0, radius=0.4)
    assert abs(J0.value - 0.6) <= 1e-10
    fit = fit_decay(LAMS, LAMS ** -0.5, 2, 1)
    rows = export_decay_csv(fit, tmp_path / "d.csv").read_text().splitlines()
    assert rows[0] == "lambda,abs_value" and len(rows) == 13
