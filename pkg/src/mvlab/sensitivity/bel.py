"""Bismut-Elworthy-Li estimators of the gradient and Hessian of x -> P^mu_{s,t}(f)(x).

With omega(u) = phi((u - s)/(t - s)) rising from 0 to 1 on [s, t],
    grad P f(x) = E[f(X_t) tau],          tau = int_s^t omega'(u) grad X_{s,u} dW_u,
and with a split time u = s + (1 - split_eps)(t - s),
    hess P f(x) = E[f(X_t) (tau2_{s,u} + grad X_{s,u} tau_{u,t}(X_u) tau_{s,u}')],
tau2 being the same Ito integral with grad^2 X in place of grad X. All Ito integrals
are left-point sums over the increments that drive X itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..catalog.models import DriftModel
from ..engine.core import LawProxy, TimeGrid, flow_steps, make_proxy
from ..functions import get_function
from .estimates import DerivativeEstimate, batch_stats


@dataclass(frozen=True)
class BelWeight:
    epsilon: float = 0.5
    kind: str = "cosine_tail"

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("BelWeight epsilon must lie in (0, 1)")
        if self.kind != "cosine_tail":
            raise ValueError(f"unknown weight kind {self.kind!r}")

    def phi(self, v):
        v = np.asarray(v, float)
        e = self.epsilon
        # 1 + cos(arg) runs from 0 at v = 1 - e to 1 at v = 1
        arg = (1.0 + (1.0 - v) / e) * (math.pi / 2)
        return np.where(v <= 1 - e, 0.0, np.where(v >= 1, 1.0, 1.0 + np.cos(arg)))

    def dphi(self, v):
        v = np.asarray(v, float)
        e = self.epsilon
        arg = (1.0 + (1.0 - v) / e) * (math.pi / 2)
        inside = (v > 1 - e) & (v < 1)
        return np.where(inside, np.sin(arg) * math.pi / (2 * e), 0.0)

    def omega(self, s, t, u):
        return self.phi((np.asarray(u, float) - s) / (t - s))

    def domega(self, s, t, u):
        return self.dphi((np.asarray(u, float) - s) / (t - s)) / (t - s)


def _setup(model, mu, s, t, dt, seed, proxy, mode, m_proxy):
    if not t > s:
        raise ValueError("BEL estimators need t > s")
    if proxy is None:
        grid = TimeGrid(s, t, dt)
        proxy = make_proxy(model, mu, grid, seed, m_proxy, mode)
    return proxy


def bel_gradient(model: DriftModel, mu, s: float, t: float, x, f, m: int = 100_000,
                 weight: BelWeight | None = None, seed: int = 0, dt: float = 1e-3,
                 mode: str = "particle", m_proxy: int = 4096, proxy: LawProxy | None = None,
                 scheme: str = "euler", batch: int = 25_000):
    """BEL gradient estimate; ``f`` may be a list of functions sharing the same paths."""
    weight = weight or BelWeight()
    many = isinstance(f, (list, tuple))
    fns = [get_function(g) for g in (f if many else [f])]
    proxy = _setup(model, mu, s, t, dt, seed, proxy, mode, m_proxy)
    grid = proxy.grid
    x = np.asarray(x, float).reshape(model.dim)
    contrib = [[] for _ in fns]
    for lo in range(0, m, batch):
        n = min(batch, m - lo)
        tau = np.zeros((n, model.dim))
        for st in flow_steps(model, proxy, np.tile(x, (n, 1)), seed, tangent=scheme, offset=lo):
            if st.dw is None:
                for c, fn in zip(contrib, fns):
                    c.append(fn.value(st.x)[:, None] * tau)
                break
            w = weight.domega(grid.s, grid.t_end, grid.s + st.k * grid.h)
            if w != 0.0:
                tau += w * np.einsum("maj,mj->ma", st.jac, st.dw)
    out = []
    for c, fn in zip(contrib, fns):
        mean, se = batch_stats(np.concatenate(c))
        out.append(DerivativeEstimate(mean, se, "bel", {"f": fn.name, "epsilon": weight.epsilon,
                                                        "t": t, "s": s, "dt": grid.h, "mode": mode,
                                                        "scheme": scheme}, m))
    return out if many else out[0]


def bel_hessian(model: DriftModel, mu, s: float, t: float, x, f, m: int = 200_000,
                weight: BelWeight | None = None, split_eps: float = 0.5, seed: int = 0,
                dt: float = 1e-3, mode: str = "particle", m_proxy: int = 4096,
                proxy: LawProxy | None = None, scheme: str = "euler",
                batch: int = 25_000) -> DerivativeEstimate:
    weight = weight or BelWeight()
    if not 0 < split_eps < 1:
        raise ValueError("split_eps must lie in (0, 1)")
    fn = get_function(f)
    proxy = _setup(model, mu, s, t, dt, seed, proxy, mode, m_proxy)
    grid = proxy.grid
    d = model.dim
    u = grid.s + (1 - split_eps) * (grid.t_end - grid.s)
    ku = grid.step_of(u)
    u = grid.s + ku * grid.h
    if ku <= 0 or ku >= grid.n_steps:
        raise ValueError("split time falls on an endpoint; use a finer grid")
    x = np.asarray(x, float).reshape(d)
    contrib = []
    for lo in range(0, m, batch):
        n = min(batch, m - lo)
        tau_a = np.zeros((n, d))          # tau_{s,u}
        tau2 = np.zeros((n, d, d))        # tau2_{s,u}
        tau_b = np.zeros((n, d))          # tau_{u,t}(X_u), tangent restarted at u
        Ju = None
        for st in flow_steps(model, proxy, np.tile(x, (n, 1)), seed, tangent=scheme,
                             second=True, offset=lo):
            tk = grid.s + st.k * grid.h
            if st.k == ku:
                Ju = st.jac.copy()
                Ju_inv = np.linalg.inv(Ju)
            if st.dw is None:
                fx = fn.value(st.x)
                lead = np.einsum("mai,mi->ma", Ju, tau_b)
                est = tau2 + lead[:, :, None] * tau_a[:, None, :]
                est = 0.5 * (est + np.swapaxes(est, 1, 2))
                contrib.append((fx[:, None, None] * est).reshape(n, d * d))
                break
            if st.k < ku:
                w = weight.domega(grid.s, u, tk)
                if w != 0.0:
                    tau_a += w * np.einsum("maj,mj->ma", st.jac, st.dw)
                    tau2 += w * np.einsum("mabj,mj->mab", st.hess, st.dw)
            else:
                w = weight.domega(u, grid.t_end, tk)
                if w != 0.0:
                    # grad X_{u,t_k}(X_u) = (grad X_{s,u})^{-1} grad X_{s,t_k}
                    Jrel = np.einsum("mai,mij->maj", Ju_inv, st.jac)
                    tau_b += w * np.einsum("maj,mj->ma", Jrel, st.dw)
    vals = np.concatenate(contrib)
    mean, se = batch_stats(vals)
    mean = mean.reshape(d, d)
    se = se.reshape(d, d)
    return DerivativeEstimate(mean, se, "bel_hessian",
                              {"m": m, "epsilon": weight.epsilon, "split_eps": split_eps,
                               "split_time": u, "t": t, "s": s, "dt": grid.h, "mode": mode}, m)
