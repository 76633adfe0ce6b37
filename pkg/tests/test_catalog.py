import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from mvlab.catalog import LinearDrift, load_model
from mvlab.catalog.closed_form import (bb_kernel, closed_form_flow_moments, closed_form_p, law_moments,
                                       mean_gap_factor, noise_covariance, q1_kernel)
from mvlab.catalog.models import assemble_A, eval_mean_drift, registered_kinds
from mvlab.catalog.spectral import local_quantities, spectral_scan
from mvlab.metrics import EmpiricalMeasure


def test_linear_1d_constants(lin1):
    r = spectral_scan(lin1)
    # A = [[-1, .5], [.5, -1]] has top eigenvalue -1/2
    assert abs(r.lambda0 - 0.5) < 1e-10
    assert abs(r.lambda1 - 1.0) < 1e-10
    assert abs(r.lambda12 - 0.5) < 1e-10
    assert r.h_satisfied


def test_unstable_linear_fails_h():
    r = spectral_scan(LinearDrift([[-1.0]], [[2.0]]))
    assert not r.h_satisfied
    assert r.lambda0 < 0


def test_quadratic_langevin_constants(langevin_quad):
    # b1 = -(alpha + beta) = -1.5, b2 = beta = 0.5, A = [[-1.5, .5], [.5, -1.5]]
    r = spectral_scan(langevin_quad)
    assert r.lambda1 == pytest.approx(1.5, abs=1e-10)
    assert r.lambda0 == pytest.approx(1.0, abs=1e-10)
    assert r.lambda12 == pytest.approx(1.0, abs=1e-10)


def test_quadratic_cos_langevin_constants(langevin):
    # U'' = 1 + 0.3 cos x (worst at x = pi) so sup b1 = -(0.7 + 0.5)
    r = spectral_scan(langevin)
    assert r.lambda1 == pytest.approx(1.2, abs=1e-6)
    assert r.lambda12 == pytest.approx(0.7, abs=1e-6)
    assert r.h_satisfied


def test_probes_are_reported(lin1):
    r = spectral_scan(lin1)
    assert {p["quantity"] for p in r.probes} == {"A", "b1", "b2", "hat"}
    assert r.n_evaluated > 0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=8, max_size=8))
def test_constants_interlace(entries):
    B1 = np.array(entries[:4]).reshape(2, 2) - 2 * np.eye(2)
    B2 = np.array(entries[4:]).reshape(2, 2) * 0.5
    r = spectral_scan(LinearDrift(B1, B2), n_probes=16, refine=0)
    assert r.lambda1 + 1e-12 >= r.lambda0 >= r.lambda12 - 1e-12
    assert r.lambda12_hat >= r.lambda12


def test_assemble_A_block_layout(lin2):
    x = np.zeros((1, 2))
    A = assemble_A(lin2, x, x)[0]
    assert np.allclose(A[:2, :2], lin2.B1.T) and np.allclose(A[:2, 2:], lin2.B2.T)


def test_load_model_forms(tmp_path, lin1):
    doc = lin1.to_dict()
    p = tmp_path / "m.json"
    p.write_text(json.dumps(doc))
    for src in (doc, json.dumps(doc), str(p)):
        m = load_model(src)
        assert np.allclose(m.B1, lin1.B1) and np.allclose(m.B2, lin1.B2)
    assert {"linear", "langevin"} <= set(registered_kinds())
    with pytest.raises(ValueError):
        load_model({"kind": "nope"})


def test_langevin_round_trip(langevin):
    m = load_model(langevin.to_dict())
    x = np.linspace(-2, 2, 7)[:, None]
    assert np.allclose(m.b(x, x[::-1]), langevin.b(x, x[::-1]))


def test_langevin_derivatives_by_fd():
    m = load_model({"kind": "langevin", "U": "quadratic_cos", "alpha": 1.0, "U_gamma": 0.3,
                    "V": "gaussian", "beta": 0.2})
    x1, x2, h = np.array([[0.3]]), np.array([[-0.7]]), 1e-5
    fd1 = (m.b(x1 + h, x2) - m.b(x1 - h, x2)) / (2 * h)
    fd2 = (m.b(x1, x2 + h) - m.b(x1, x2 - h)) / (2 * h)
    fd11 = (m.b1(x1 + h, x2) - m.b1(x1 - h, x2)) / (2 * h)
    assert np.allclose(m.b1(x1, x2).ravel(), fd1.ravel(), atol=1e-8)
    assert np.allclose(m.b2(x1, x2).ravel(), fd2.ravel(), atol=1e-8)
    assert np.allclose(m.b11(x1, x2).ravel(), fd11.ravel(), atol=1e-6)


def test_mean_closure_matches_pairwise(langevin):
    rng = np.random.default_rng(0)
    atoms, x = rng.normal(size=(50, 1)), rng.normal(size=(5, 1))
    w = np.full(50, 1 / 50)
    pair = np.mean(langevin.b(x[:, None, :], atoms[None]), axis=1)
    assert np.allclose(langevin.drift_against(x, atoms, w), pair)
    assert np.allclose(eval_mean_drift(langevin, x, EmpiricalMeasure.uniform(atoms)), pair)


def test_noise_covariance_routes_agree(lin2):
    q = noise_covariance(lin2.B1, 1.3, "quadrature")
    l = noise_covariance(lin2.B1, 1.3, "lyapunov")
    assert np.allclose(q, l, atol=1e-12)


def test_ou_noise_variance():
    # int_0^t e^{-2r} dr
    assert noise_covariance(np.array([[-1.0]]), 1.0)[0, 0] == pytest.approx((1 - np.exp(-2)) / 2, rel=1e-13)


def test_flow_moments_1d(lin1):
    mean, cov = closed_form_flow_moments(lin1, [0.0], [1.0], 0.0, 1.0)
    assert mean[0] == pytest.approx(np.exp(-1.0), rel=1e-13)
    m, C = law_moments(lin1, [1.0], [[0.0]], 0.0, 1.0)
    assert m[0] == pytest.approx(np.exp(-0.5), rel=1e-13)


def test_kernels_linear(lin2):
    tau = 0.7
    assert np.allclose(mean_gap_factor(lin2, tau), expm(tau * (lin2.B1 + lin2.B2)) - expm(tau * lin2.B1))
    assert np.allclose(bb_kernel(lin2, 0, tau).T, lin2.B2 @ expm(tau * lin2.B1))
    assert np.allclose(q1_kernel(lin2, 0, tau).T, lin2.B2 @ expm(tau * (lin2.B1 + lin2.B2)))


def test_p_kernel_affine_in_x(lin2):
    z = np.array([0.2, -0.4])
    p = lambda x: closed_form_p(lin2, [0.1, 0.0], [0.3, 0.2], 0, 0.8, x, z)
    x0, x1 = np.array([0.5, 1.0]), np.array([-1.0, 2.0])
    assert np.allclose(p(0.5 * (x0 + x1)), 0.5 * (p(x0) + p(x1)))
    # slope in x is q1 (proportional to B2 e^{(B1+B2) tau})
    J = np.stack([p(e) - p(np.zeros(2)) for e in np.eye(2)])
    assert np.allclose(J, q1_kernel(lin2, 0, 0.8))


def test_local_quantities_shapes(lin2):
    x = np.zeros((3, 2))
    q = local_quantities(lin2, x, x)
    assert all(v.shape == (3,) for v in q.values())
