import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from mvlab.catalog import LinearDrift
from mvlab.sensitivity import (CapabilityError, DerivativeEstimate, backward_difference_decomposition,
                               estimate_BB, first_order_derivative, gamma_operator, linear_duality_gradient,
                               linear_first_order, linear_first_order_grad, linear_first_order_via_p,
                               linear_phi_mixture, linear_second_order, second_order_derivative, within)

DIRAC0 = {"kind": "dirac", "x": 0.0}
GAUSS = {"kind": "gaussian", "mean": 0.4, "cov": 0.7}


def test_closed_form_value_for_identity(lin1):
    est = first_order_derivative(lin1, DIRAC0, 0, 1.0, "id", [1.0])
    assert est.value == pytest.approx(math.exp(-0.5), abs=1e-8)
    assert est.stderr == 0.0


@settings(max_examples=25, deadline=None)
@given(st.floats(-2, 2), st.floats(0.1, 3), st.sampled_from(["id", "square", "cos", "sigmoid"]))
def test_p_kernel_route_matches_closed_form(y, t, f):
    m = LinearDrift([[-1.0]], [[0.5]])
    a = linear_first_order(m, GAUSS, 0, t, f, [y])
    b = linear_first_order_via_p(m, GAUSS, 0, t, f, [y])
    assert b == pytest.approx(a, abs=1e-9)


@settings(max_examples=15, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.sampled_from(["square", "cos", "sigmoid"]))
def test_duality_gradient_2d(y0, y1, f):
    m = LinearDrift([[-1.2, 0.3], [-0.1, -0.9]], [[0.2, 0.1], [0.0, 0.3]])
    mu = {"kind": "gaussian", "mean": [0.2, -0.1], "cov": 0.5}
    g1 = linear_first_order_grad(m, mu, 0, 1.3, f, [y0, y1])
    g2 = linear_duality_gradient(m, mu, 0, 1.3, f, [y0, y1])
    assert np.allclose(g1, g2, atol=1e-8)


def test_identity_gradient_is_full_exponential(lin2):
    g = linear_first_order_grad(lin2, DIRAC0, 0, 1.0, "id", [0.3, 0.1])
    # id reads the first coordinate, so the gradient is the first row of e^{t(B1+B2)}
    assert np.allclose(g, expm(lin2.B1 + lin2.B2)[0], atol=1e-12)


def test_first_order_is_centered(lin1):
    # y ~ mu averaged by Gauss-Hermite: exact here, the derivative being polynomial in y for f = square
    xs, ws = np.polynomial.hermite_e.hermegauss(20)
    ys = GAUSS["mean"] + math.sqrt(GAUSS["cov"]) * xs
    avg = sum(w * linear_first_order(lin1, GAUSS, 0, 1.0, "square", [y]) for y, w in zip(ys, ws)) / ws.sum()
    assert abs(avg) < 1e-10


def test_first_order_vanishes_at_dirac_base(lin1):
    assert linear_first_order(lin1, {"kind": "dirac", "x": 0.7}, 0, 1.0, "cos", [0.7]) == pytest.approx(0, abs=1e-12)


def test_second_order_identity_vanishes(lin1):
    assert linear_second_order(lin1, GAUSS, 0, 1.0, "id", [1.0], [-0.5]) == pytest.approx(0, abs=1e-10)


def test_second_order_zero_at_dirac_base(lin1):
    assert linear_second_order(lin1, {"kind": "dirac", "x": 0.6}, 0, 1.0, "square", [0.6], [0.6]) == \
        pytest.approx(0, abs=1e-10)


def test_second_order_square_value(lin1):
    # phi along (1 - e) delta_0 + e delta_1 is a quadratic in e with leading coefficient
    # (E12^2 - E1^2) y^2, so D2 = 2 (e^{-1} - e^{-2}) = 0.4650883... (frozen)
    est = second_order_derivative(lin1, DIRAC0, 0, 1.0, "square", [1.0], [1.0])
    assert est.value == pytest.approx(0.46508832, abs=1e-7)


def test_mixture_expansion_matches_derivatives(lin1):
    e = 1e-3
    phi = lambda a: linear_phi_mixture(lin1, [(1 - a, np.array([0.]), np.zeros((1, 1))), (a, np.array([1.]), None)],
                                       0, 1.0, "cos")
    D = linear_first_order(lin1, DIRAC0, 0, 1.0, "cos", [1.0])
    D2 = linear_second_order(lin1, DIRAC0, 0, 1.0, "cos", [1.0], [1.0])
    assert (phi(e) - phi(-e)) / (2 * e) == pytest.approx(D, rel=1e-6)
    assert (phi(e) - 2 * phi(0) + phi(-e)) / e ** 2 == pytest.approx(D2, rel=1e-4)


def test_closed_form_routes_refuse_nonlinear(langevin):
    with pytest.raises(CapabilityError):
        first_order_derivative(langevin, DIRAC0, 0, 1.0, "id", [1.0])
    with pytest.raises(CapabilityError):
        second_order_derivative(langevin, DIRAC0, 0, 1.0, "id", [1.0], [1.0])


def test_unknown_route(lin1):
    with pytest.raises(ValueError):
        first_order_derivative(lin1, DIRAC0, 0, 1.0, "id", [1.0], route="magic")


def test_measure_fd_small(lin1):
    est = first_order_derivative(lin1, DIRAC0, 0, 1.0, "id", [1.0], "measure_fd", {"M": 1024, "dt": 1e-2})
    assert within(est, math.exp(-0.5), 4.0)
    assert est.m == 8 * 2048


def test_estimate_record_json(lin1):
    est = first_order_derivative(lin1, DIRAC0, 0, 1.0, "id", [1.0], "measure_fd", {"M": 256, "dt": 5e-2})
    rec = json.loads(est.dumps())
    assert set(rec) == {"route", "value", "stderr", "m", "params"}
    assert rec["route"] == "measure_fd" and rec["params"]["M"] == 256
    with pytest.raises(ValueError):
        DerivativeEstimate(1.0, -1.0, "x")


def test_bb_at_equal_times_is_b2(lin2):
    bb = estimate_BB(lin2, DIRAC0, 0.5, 0.5, [0.1, 0.2], [0.3, 0.4])
    assert np.allclose(bb.value, lin2.B2.T) and bb.m_samples == 0


def test_bb_zero_without_interaction(ou):
    bb = estimate_BB(ou, DIRAC0, 0, 1.0, [0.1], [0.3], m=100, dt=1e-2, mode="exact")
    assert np.all(bb.value == 0)


def test_bb_linear_closed_form(lin1):
    bb = estimate_BB(lin1, DIRAC0, 0, 1.0, [0.1], [0.3], m=200, dt=1e-2, mode="exact")
    assert bb.value[0, 0] == pytest.approx(0.5 * math.exp(-1), abs=1e-10)


def test_gamma_operator_examples():
    x = np.array([1.0, 2.0])
    assert gamma_operator(lambda u: [1.0, 0.0], lambda u: [1.0, 0.0], x) == 1.0
    assert gamma_operator(lambda u: [1.0, 0.0], lambda u: [0.0, 1.0], x) == 0.0
    # f = x0^2 x1, g = x0 x1^2: grad f = (2 x0 x1, x0^2), grad g = (x1^2, 2 x0 x1)
    gf = lambda u: [2 * u[0] * u[1], u[0] ** 2]
    gg = lambda u: [u[1] ** 2, 2 * u[0] * u[1]]
    assert gamma_operator(gf, gg, x) == pytest.approx(4 * 4 + 1 * 4)


def test_backward_trivial_cases(lin1, ou):
    d0, d1 = DIRAC0, {"kind": "dirac", "x": 1.0}
    same = backward_difference_decomposition(lin1, d0, d0, 0, 1.0, [0.3], dt=1e-2, mode="exact")
    free = backward_difference_decomposition(ou, d0, d1, 0, 1.0, [0.3], dt=1e-2, mode="exact")
    for r in (same, free):
        assert np.allclose(r["lhs"], 0) and np.allclose(r["rhs"], 0)
