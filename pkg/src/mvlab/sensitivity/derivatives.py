"""Three routes to the centered measure derivatives of mu -> phi_{s,t}(mu)(f).

first order:  (delta_y - mu) D_mu phi_{s,t}(f)
second order: (delta_y - mu) x (delta_z - mu) D^2_mu phi_{s,t}(f)

closed_form / quadrature   linear drift, exact Gaussian expectations (64-node Gauss-Legendre in time)
semigroup_quadrature       P-part plus the Q-part built from chained tangent paths (any drift)
measure_fd                 common-random-number differences of weighted clouds (any drift)

Linear-drift notation: T = t - s, E1 = e^{T B1}, K_T = e^{T(B1+B2)} - e^{T B1}, Sigma_T the
noise covariance. With m the mean of mu,
    X_{s,t}(y) ~ N(E1 y + K_T m, Sigma_T),
and the centered first derivative acts on any g as
    L(g) = E g(X_{s,t}(y)) - E_mu g(X_{s,t}(Y)) + E_mu[grad g(X_{s,t}(Y))] . K_T (y - m).
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm

from ..catalog.closed_form import closed_form_p, gauss_legendre, noise_covariance
from ..catalog.models import DriftModel, LinearDrift
from ..engine.core import (TimeGrid, flow_steps, initial_moments, make_proxy, sample_initial,
                           simulate_law_proxy)
from ..functions import get_function
from ..rng import StreamKey, derive_seed
from .estimates import DerivativeEstimate, batch_stats

FIRST_ROUTES = ("closed_form", "semigroup_quadrature", "measure_fd")
SECOND_ROUTES = ("quadrature", "double_measure_fd")


class CapabilityError(ValueError):
    pass


# Linear closed forms ------------------------------------------------------------

class _LinearParts:
    def __init__(self, model: LinearDrift, mu, s: float, t: float):
        if not isinstance(model, LinearDrift):
            raise CapabilityError("closed-form routes need the linear drift")
        self.model = model
        self.m, self.S0 = initial_moments(mu, model.dim)
        self.s, self.t = s, t
        T = t - s
        B1, B2 = model.B1, model.B2
        self.E1 = expm(T * B1)
        self.E12 = expm(T * (B1 + B2))
        self.K = self.E12 - self.E1
        self.ST = noise_covariance(B1, T)
        self.law_mean = self.E12 @ self.m
        self.law_cov = self.E1 @ self.S0 @ self.E1.T + self.ST

    def point_mean(self, y):
        return self.E1 @ y + self.K @ self.m

    def K_at(self, tau):
        B1, B2 = self.model.B1, self.model.B2
        return expm(tau * (B1 + B2)) - expm(tau * B1)


def linear_first_order(model: LinearDrift, mu, s: float, t: float, f, y) -> float:
    """Exact (delta_y - mu) D phi_{s,t}(f) for the linear drift and a Gaussian or Dirac mu."""
    P = _LinearParts(model, mu, s, t)
    fn = get_function(f)
    y = np.asarray(y, float).reshape(model.dim)
    return (fn.gauss_value(P.point_mean(y), P.ST) - fn.gauss_value(P.law_mean, P.law_cov)
            + fn.gauss_grad(P.law_mean, P.law_cov) @ (P.K @ (y - P.m)))


def linear_first_order_grad(model: LinearDrift, mu, s: float, t: float, f, y) -> np.ndarray:
    """grad_y of the centered first derivative: E1' E grad f(X(y)) + K' E_mu grad f."""
    P = _LinearParts(model, mu, s, t)
    fn = get_function(f)
    y = np.asarray(y, float).reshape(model.dim)
    return P.E1.T @ fn.gauss_grad(P.point_mean(y), P.ST) + P.K.T @ fn.gauss_grad(P.law_mean, P.law_cov)


def linear_first_order_via_p(model: LinearDrift, mu, s: float, t: float, f, y) -> float:
    """Same quantity through P^mu f plus the p-kernel integral over [s, t].

    The centered Q-part is int_s^t [p_{s,u}(y, z) - p_{s,u}(m, z)]' P_{u,t}(grad f) du, where
    p is affine in its first argument and P_{u,t}(grad f), averaged over phi_{s,u}(mu), equals
    e^{(t-u)B1'} E_mu grad f(X_{s,t}(Y)).
    """
    P = _LinearParts(model, mu, s, t)
    fn = get_function(f)
    y = np.asarray(y, float).reshape(model.dim)
    g = fn.gauss_grad(P.law_mean, P.law_cov)
    z = np.zeros(model.dim)

    def integrand(u):
        dp = (closed_form_p(model, P.m, P.m, s, u, y, z) - closed_form_p(model, P.m, P.m, s, u, P.m, z))
        return dp @ (expm((t - u) * model.B1).T @ g)

    q = gauss_legendre(integrand, s, t)
    return fn.gauss_value(P.point_mean(y), P.ST) - fn.gauss_value(P.law_mean, P.law_cov) + float(q)


def linear_duality_gradient(model: LinearDrift, mu, s: float, t: float, f, y) -> np.ndarray:
    """grad D f(y) as the tangent pairing P(grad f)(y) + int q_{s,v}(y, .) P_{v,t}(grad f) dv.

    q_{s,v} is the x-gradient of p_{s,v}, computed here by finite differences of the
    closed-form p (exact, p being affine in x).
    """
    P = _LinearParts(model, mu, s, t)
    fn = get_function(f)
    y = np.asarray(y, float).reshape(model.dim)
    d = model.dim
    g = fn.gauss_grad(P.law_mean, P.law_cov)
    z = np.zeros(d)

    def q(v):
        base = closed_form_p(model, P.m, P.m, s, v, np.zeros(d), z)
        return np.stack([closed_form_p(model, P.m, P.m, s, v, e, z) - base for e in np.eye(d)])

    integral = gauss_legendre(lambda v: q(v) @ (expm((t - v) * model.B1).T @ g), s, t)
    return P.E1.T @ fn.gauss_grad(P.point_mean(y), P.ST) + integral


def linear_second_order(model: LinearDrift, mu, s: float, t: float, f, y, z) -> float:
    """(delta_y - mu) x (delta_z - mu) D^2 phi_{s,t}(f) by quadrature of the composition formula.

    For the linear drift only the cross terms of S survive the double centering:
        D2 = int_s^t [L_u^y(G_u)' B2 L_u^z(id) + L_u^z(G_u)' B2 L_u^y(id)] du,
    with L_u^y(id) = e^{(u-s)(B1+B2)}(y - m) and
        L_u^y(G_u) = e^{(t-u)B1'}[E grad f(X_{s,t}(y)) - E_mu grad f + E_mu hess f e^{(t-u)B1} K_{u-s}(y - m)].
    """
    P = _LinearParts(model, mu, s, t)
    fn = get_function(f)
    B1, B2 = model.B1, model.B2
    y = np.asarray(y, float).reshape(model.dim)
    z = np.asarray(z, float).reshape(model.dim)
    g_law = fn.gauss_grad(P.law_mean, P.law_cov)
    H_law = fn.gauss_hess(P.law_mean, P.law_cov)
    gy = fn.gauss_grad(P.point_mean(y), P.ST)
    gz = fn.gauss_grad(P.point_mean(z), P.ST)

    def LG(u, w, gw):
        Et = expm((t - u) * B1)
        return Et.T @ (gw - g_law + H_law @ (Et @ (P.K_at(u - s) @ (w - P.m))))

    def Lid(u, w):
        return expm((u - s) * (B1 + B2)) @ (w - P.m)

    def integrand(u):
        return LG(u, y, gy) @ B2 @ Lid(u, z) + LG(u, z, gz) @ B2 @ Lid(u, y)

    return float(gauss_legendre(integrand, s, t))


def linear_phi_mixture(model: LinearDrift, components, s: float, t: float, f) -> float:
    """phi_{s,t}(nu)(f) for a signed mixture nu = sum_c w_c N(m_c, C_c) (weights summing to 1)."""
    fn = get_function(f)
    d = model.dim
    T = t - s
    E1 = expm(T * model.B1)
    K = expm(T * (model.B1 + model.B2)) - E1
    ST = noise_covariance(model.B1, T)
    comps = [(float(w), np.asarray(m, float).reshape(d),
              np.zeros((d, d)) if C is None else np.atleast_2d(np.asarray(C, float)))
             for w, m, C in components]
    m_nu = sum(w * m for w, m, _ in comps)
    return float(sum(w * fn.gauss_value(E1 @ m + K @ m_nu, E1 @ C @ E1.T + ST) for w, m, C in comps))


def linear_flow_mean_sensitivity(model: LinearDrift, s: float, t: float) -> np.ndarray:
    """d X_{s,t}(x) / d m for the mean m of the initial law: K_{t-s} (the flow is affine in m)."""
    return expm((t - s) * (model.B1 + model.B2)) - expm((t - s) * model.B1)


# Weighted clouds for the finite-difference routes ----------------------------------

def _cloud_value(model, mu_atoms, points, eps, f, grid, seed, replica, K):
    """phi_{s,t}(mu + sum_j eps_j (delta_{y_j} - mu))(f) from one weighted cloud."""
    M = mu_atoms.shape[0]
    parts = [mu_atoms] + [np.tile(np.asarray(p, float).reshape(1, -1), (K, 1)) for p in points]
    atoms = np.concatenate(parts)
    w = np.concatenate([np.full(M, (1.0 - sum(eps)) / M)] + [np.full(K, e / K) for e in eps])
    prox = simulate_law_proxy(model, None, 0, grid, seed, replica, atoms0=atoms, weights=w,
                              store_atoms=not model.affine_in_x2)
    xT = prox.snapshots[grid.n_steps]
    return float(w @ get_function(f).value(xT))


def _fd_replicas(model, mu, s, t, f, points, stencil, M, K, replicas, seed, dt):
    grid = TimeGrid(s, t, dt)
    vals = []
    for r in range(replicas):
        atoms = sample_initial(mu, M, model.dim, StreamKey(seed, r, stream=3)).positions
        acc = 0.0
        for coef, eps in stencil:
            acc += coef * _cloud_value(model, atoms, points, eps, f, grid, seed, r, K)
        vals.append(acc)
    return np.array(vals)


# Semigroup quadrature -----------------------------------------------------------------

def _semigroup_first(model: DriftModel, mu, s, t, f, y, m, depth, seed, dt, mode, m_proxy,
                     proxy=None, batch=20_000):
    """P-part and Q-part samples; Q is a chain of depth+1 tangent paths (see module docstring)."""
    fn = get_function(f)
    d = model.dim
    grid = TimeGrid(s, t, dt)
    proxy = proxy or make_proxy(model, mu, grid, seed, m_proxy, mode)
    y = np.asarray(y, float).reshape(d)
    n_chain = depth + 1
    totals, terms = [], []
    for b, lo in enumerate(range(0, m, batch)):
        n = min(batch, m - lo)
        k0 = derive_seed(seed, 7, b)
        src_y = np.tile(y, (n, 1))
        src_mu = sample_initial(mu, n, d, StreamKey(k0, 0, stream=3)).positions
        pools = [sample_initial(mu, n, d, StreamKey(k0, 1 + j, stream=3)).positions for j in range(n_chain)]
        # independent y and mu sources: with shared increments the linear/id case has zero
        # variance and the reported stderr would no longer cover the depth-truncation bias
        gens = [flow_steps(model, proxy, src_y, k0, 0),
                flow_steps(model, proxy, src_mu, k0, 1)]
        gens += [flow_steps(model, proxy, pools[j], k0, 2 + j, tangent="euler") for j in range(n_chain)]
        C = [np.zeros((n, d)) for _ in range(n_chain)]
        for states in zip(*gens):
            Sy, Smu = states[0], states[1]
            Ys = states[2:]
            if Sy.dw is None:
                p_part = fn.value(Sy.x) - fn.value(Smu.x)
                q_terms = [np.einsum("ma,maj,mj->m", C[j], Ys[j].jac, fn.grad(Ys[j].x)) for j in range(n_chain)]
                break
            Jinv = [np.linalg.inv(Yk.jac) if d > 1 else 1.0 / Yk.jac for Yk in Ys]
            A = model.b(Ys[0].x, Sy.x) - model.b(Ys[0].x, Smu.x)
            newC = [C[0] + grid.h * np.einsum("ma,mai->mi", A, Jinv[0])]
            for j in range(1, n_chain):
                R = np.einsum("ma,maj->mj", C[j - 1], Ys[j - 1].jac)
                A = np.einsum("mk,mkj->mj", R, model.b2(Ys[j].x, Ys[j - 1].x))
                newC.append(C[j] + grid.h * np.einsum("ma,mai->mi", A, Jinv[j]))
            C = newC
        totals.append(p_part + sum(q_terms))
        terms.append(np.stack([p_part] + q_terms, axis=1))
    return np.concatenate(totals), np.concatenate(terms)


# Public entry points ------------------------------------------------------------------------

def first_order_derivative(model: DriftModel, mu, s: float, t: float, f, y, route: str = "closed_form",
                           params: dict | None = None) -> DerivativeEstimate:
    """Centered first derivative (delta_y - mu) D_mu phi_{s,t}(f) by the chosen route."""
    p = dict(params or {})
    if route not in FIRST_ROUTES:
        raise ValueError(f"unknown route {route!r}; choose from {FIRST_ROUTES}")
    if route == "closed_form":
        v = linear_first_order(model, mu, s, t, f, y)
        return DerivativeEstimate(v, 0.0, route, {"quadrature": "gauss-legendre-64"}, 0)
    seed = int(p.get("seed", 0))
    dt = float(p.get("dt", 1e-3))
    if route == "semigroup_quadrature":
        m = int(p.get("m", 20_000))
        depth = int(p.get("depth", 2))
        tot, terms = _semigroup_first(model, mu, s, t, f, y, m, depth, seed, dt,
                                      p.get("mode", "particle"), int(p.get("m_proxy", 4096)))
        mean, se = batch_stats(tot)
        tm, tse = batch_stats(terms)
        meta = {"m": m, "depth": depth, "dt": dt, "seed": seed, "term_means": tm.tolist(),
                "term_stderr": tse.tolist(), "quadrature": "left-point on the simulation grid"}
        return DerivativeEstimate(float(mean), float(se), route, meta, m)
    eps = float(p.get("eps", 1e-2))
    M = int(p.get("M", 4096))
    K = int(p.get("K", M))
    R = int(p.get("replicas", 8))
    stencil = [(1 / (2 * eps), [eps]), (-1 / (2 * eps), [-eps])]
    vals = _fd_replicas(model, mu, s, t, f, [y], stencil, M, K, R, seed, dt)
    mean, se = batch_stats(vals)
    return DerivativeEstimate(float(mean), float(se), route,
                              {"eps": eps, "M": M, "K": K, "replicas": R, "dt": dt, "seed": seed},
                              R * (M + K))


def second_order_derivative(model: DriftModel, mu, s: float, t: float, f, y, z,
                            route: str = "quadrature", params: dict | None = None) -> DerivativeEstimate:
    """Centered second derivative (delta_y - mu) x (delta_z - mu) D^2_mu phi_{s,t}(f)."""
    p = dict(params or {})
    if route not in SECOND_ROUTES:
        raise ValueError(f"unknown route {route!r}; choose from {SECOND_ROUTES}")
    if route == "quadrature":
        v = linear_second_order(model, mu, s, t, f, y, z)
        return DerivativeEstimate(v, 0.0, route, {"quadrature": "gauss-legendre-64"}, 0)
    eps = float(p.get("eps", 5e-2))
    M = int(p.get("M", 4096))
    K = int(p.get("K", M))
    R = int(p.get("replicas", 8))
    seed = int(p.get("seed", 0))
    dt = float(p.get("dt", 1e-3))
    c = 1.0 / (4 * eps * eps)
    stencil = [(c, [eps, eps]), (-c, [eps, -eps]), (-c, [-eps, eps]), (c, [-eps, -eps])]
    vals = _fd_replicas(model, mu, s, t, f, [y, z], stencil, M, K, R, seed, dt)
    mean, se = batch_stats(vals)
    return DerivativeEstimate(float(mean), float(se), route,
                              {"eps": eps, "M": M, "K": K, "replicas": R, "dt": dt, "seed": seed},
                              R * (M + 2 * K))


def gamma_operator(gf, gg, x) -> float:
    """Gamma(f x g)(x) = <grad f(x), grad g(x)>."""
    a = np.asarray(gf(x), float).reshape(-1)
    b = np.asarray(gg(x), float).reshape(-1)
    return float(a @ b)
