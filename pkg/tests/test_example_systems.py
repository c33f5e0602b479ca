import numpy as np
import pytest

from disphyp.errors import ConfigError, HyperbolicityError
from disphyp.example_systems import (FAMILIES, CoefficientFunction, build_differential_system,
                                     build_higher_order, build_second_order,
                                     characteristic_roots, check_T_class, condition_4_14,
                                     get_family)
from disphyp.spectral import check_assumptions
from disphyp.symbols import ZoneParams


@pytest.mark.parametrize("expr, ok", [("2 + cos(log(e + t))", True), ("2 + cos(t)", False),
                                      ("3", True), ("1/(1 + t)", True)])
def test_T0_class(expr, ok):
    assert check_T_class(CoefficientFunction(expr)).passed is ok


def test_T_class_decay_exponent():
    # 1/(1+t) lies in T_0{1} but (1+t)^(-1/2) does not
    assert check_T_class(CoefficientFunction("1/(1 + t)", rho=1.0)).passed
    assert not check_T_class(CoefficientFunction("pow(1 + t, -0.5)", rho=1.0)).passed


def test_coefficient_derivatives():
    f = CoefficientFunction("sin(2*t)")
    d = f.derivatives(np.array([0.3]), 3)[:, 0]
    assert np.allclose(d, [np.sin(0.6), 2 * np.cos(0.6), -4 * np.sin(0.6), -8 * np.cos(0.6)],
                       atol=1e-13)


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_families_are_strictly_hyperbolic(name):
    sys = get_family(name)
    xi = np.eye(sys.n)
    lam, im = characteristic_roots(sys, np.array([0.0, 10.0, 1e3])[:, None].repeat(sys.n, 1).ravel(),
                                   np.tile(xi, (3, 1)))
    assert im.max() <= 1e-10 and np.diff(lam, axis=-1).min() > 0


def test_ho3_roots_and_condition_4_14():
    sys = get_family("ho3_homogeneous")
    t = np.array([0.0, 7.0, 300.0])
    lam, _ = characteristic_roots(sys, t, np.full((3, 1), 2.0))
    c = 0.25 * np.cos(np.log(np.e + t))
    expect = 2.0 * np.stack([1 + c, 2 + c, 3 + c], axis=1)
    assert np.abs(lam - expect).max() <= 1e-10
    by_h = condition_4_14(sys, xi=[[1.0]])
    assert by_h[1e4] <= 1.25 * by_h[1e3] + 1e-9


def test_second_order_roots():
    sys = get_family("wave_second_order")
    t = np.array([0.0, 50.0])
    xi = np.array([[0.6, 0.8], [3.0, 4.0]])
    lam, _ = characteristic_roots(sys, t, xi)
    a = 2 + np.cos(np.log(np.e + t))
    r = np.linalg.norm(xi, axis=1)
    assert np.abs(lam - np.stack([-a * r, a * r], 1)).max() <= 1e-10


def test_second_order_rejects_nonhyperbolic():
    with pytest.raises(HyperbolicityError):
        build_second_order([["0", "0"], ["0", "0"]], ["1", "0"])
    with pytest.raises(HyperbolicityError):
        build_second_order([["-1", "0"], ["0", "-1"]], ["0", "0"])


def test_higher_order_validation():
    with pytest.raises(ValueError):
        build_higher_order(2, {(2, (0,)): "1"}, 1)
    with pytest.raises(HyperbolicityError):
        # tau^2 + xi^2 has complex roots
        build_higher_order(2, {(0, (2,)): "1"}, 1)
    with pytest.raises(HyperbolicityError):
        # tau^2 has a double root
        build_higher_order(2, {(1, (1,)): "0"}, 1)


def test_differential_builder_shapes():
    with pytest.raises(ValueError):
        build_differential_system([], [["0"]])
    with pytest.raises(ValueError):
        build_differential_system([[["1", "0"], ["0", "-1"]]], [["0"]])
    sys = build_differential_system([[["1", "0"], ["0", "-1"]]], [["0", "0"], ["0", "0"]])
    assert sys.hermitian_principal
    sys = build_differential_system([[["1", "t"], ["0", "-1"]]], [["0", "0"], ["0", "0"]])
    assert not sys.hermitian_principal


def test_unknown_family():
    with pytest.raises(ConfigError):
        get_family("nope")
    with pytest.raises(ConfigError):
        get_family("wave_constant", colour="red")


def test_self_adjoint_with_integrable_drift_passes_all():
    # self-adjoint A_j and an L^1 imaginary part of B: every assumption holds once the
    # dissipation weight gamma(t) = 2 ||Im B(t)|| (integrable) is declared
    A = [[["2 + cos(log(e + t))", "0"], ["0", "-(2 + cos(log(e + t)))"]],
         [["0", "2 + cos(log(e + t))"], ["2 + cos(log(e + t))", "0"]]]
    B = [["i/(1 + t)**2", "1/(1 + t)"], ["1/(1 + t)", "-i/(1 + t)**2"]]
    sys = build_differential_system(A, B, zone=ZoneParams(1.0, 0.0), gamma="2/(1 + t)**2")
    rep = check_assumptions(sys)
    assert rep.a1_pass and rep.a2_pass and rep.a3_pass and rep.a4_pass and rep.passed


def test_negative_drift_without_weight_fails_A4():
    A = [[["1", "0"], ["0", "-1"]], [["0", "1"], ["1", "0"]]]
    B = [["i/(1 + t)**2", "0"], ["0", "-i/(1 + t)**2"]]
    rep = check_assumptions(build_differential_system(A, B))
    assert rep.a3_pass and not rep.a4_pass
