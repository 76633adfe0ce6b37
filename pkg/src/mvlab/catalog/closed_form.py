"""Closed forms for the linear drift b(x1, x2) = B1 x1 + B2 x2.

The flow started at x under a law with mean m is Gaussian:
    X_{s,t}(x) = e^{tau B1}(x - m) + e^{tau(B1+B2)} m + int_s^t e^{(t-u)B1} dW_u,
with tau = t - s and covariance int_0^tau e^{rB1} e^{rB1'} dr.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.linalg import expm, solve_continuous_lyapunov

from .models import LinearDrift

GL_NODES = 64


@lru_cache(maxsize=8)
def _legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


def gauss_legendre(fn, a: float, b: float, n: int = GL_NODES):
    """int_a^b fn(u) du for array-valued fn, n-node Gauss-Legendre."""
    if b == a:
        return 0.0 * fn(a)
    x, w = _legendre(n)
    u = 0.5 * (b - a) * x + 0.5 * (b + a)
    acc = None
    for ui, wi in zip(u, w):
        v = wi * np.asarray(fn(ui))
        acc = v if acc is None else acc + v
    return 0.5 * (b - a) * acc


def noise_covariance(B1: np.ndarray, tau: float, method: str = "quadrature") -> np.ndarray:
    """int_0^tau e^{rB1} e^{rB1'} dr."""
    if method == "lyapunov":
        # B1 S + S B1' = e^{tau B1} e^{tau B1'} - I
        E = expm(tau * B1)
        return solve_continuous_lyapunov(B1, E @ E.T - np.eye(B1.shape[0]))
    return gauss_legendre(lambda r: expm(r * B1) @ expm(r * B1).T, 0.0, tau)


def _mean_vec(model: LinearDrift, m) -> np.ndarray:
    return np.asarray(m, float).reshape(model.dim)


def flow_moments(model: LinearDrift, mu_mean, x, s: float, t: float):
    """Mean and covariance of X_{s,t}(x) when the initial law has mean ``mu_mean``."""
    tau = t - s
    m = _mean_vec(model, mu_mean)
    x = np.asarray(x, float).reshape(model.dim)
    E1 = expm(tau * model.B1)
    E12 = expm(tau * (model.B1 + model.B2))
    mean = E1 @ (x - m) + E12 @ m
    return mean, noise_covariance(model.B1, tau)


def closed_form_flow_moments(model: LinearDrift, mu_mean, x, s: float, t: float):
    return flow_moments(model, mu_mean, x, s, t)


def law_moments(model: LinearDrift, mu_mean, mu_cov, s: float, t: float):
    """Mean and covariance of phi_{s,t}(mu) for mu with the given first two moments."""
    tau = t - s
    m = _mean_vec(model, mu_mean)
    S0 = np.zeros((model.dim, model.dim)) if mu_cov is None else np.atleast_2d(np.asarray(mu_cov, float))
    E1 = expm(tau * model.B1)
    E12 = expm(tau * (model.B1 + model.B2))
    return E12 @ m, E1 @ S0 @ E1.T + noise_covariance(model.B1, tau)


def mean_gap_factor(model: LinearDrift, tau: float) -> np.ndarray:
    """K_tau = e^{tau(B1+B2)} - e^{tau B1}: sensitivity of X_{s,t}(x) to the initial mean."""
    return expm(tau * (model.B1 + model.B2)) - expm(tau * model.B1)


def closed_form_p(model: LinearDrift, mu0_mean, mu1_mean, s: float, t: float, x, z) -> np.ndarray:
    """Resummed Dyson-Phillips kernel p_{s,t}(x, z) for the linear drift."""
    B1, B2 = model.B1, model.B2
    A = B1 + B2
    tau = t - s
    x = np.asarray(x, float).reshape(model.dim)
    z = np.asarray(z, float).reshape(model.dim)
    m0 = _mean_vec(model, mu0_mean)
    m1 = _mean_vec(model, mu1_mean)
    I1 = gauss_legendre(lambda u: expm((tau - u) * A) @ B1 @ expm(u * A), 0.0, tau)
    I2 = gauss_legendre(lambda u: expm((tau - u) * A) @ B2 @ expm(u * A), 0.0, tau)
    return B1 @ z + B2 @ expm(tau * A) @ x + B2 @ (I1 @ m1 + I2 @ m0)


def mean_kernel(model: LinearDrift, mu_mean, s: float, t: float, x0, x1) -> np.ndarray:
    """b_{s,t}(x0, x1) = E[b(x1, X_{s,t}(x0))]."""
    mean, _ = flow_moments(model, mu_mean, x0, s, t)
    return model.B1 @ np.asarray(x1, float).reshape(model.dim) + model.B2 @ mean


def bb_kernel(model: LinearDrift, s: float, t: float) -> np.ndarray:
    """grad_{x0} b_{s,t}(x0, x1) = e^{(t-s)B1'} B2' (independent of the points)."""
    return expm((t - s) * model.B1).T @ model.B2.T


def q1_kernel(model: LinearDrift, s: float, t: float) -> np.ndarray:
    """Gradient in x of p_{s,t}(x, z); its transpose is B2 e^{(B1+B2)(t-s)}."""
    return (model.B2 @ expm((t - s) * (model.B1 + model.B2))).T
