"""The kernel BB^mu_{s,t}(x0, x1) = grad_{x0} E[b(x1, X_{s,t}(x0))].

Differentiating under the expectation gives BB = E[grad X_{s,t}(x0) b2(x1, X_{s,t}(x0))],
estimated here along tangent paths. In the index convention of the engine,
BB[a, j] = d/d x0_a of the j-th drift component, so for the linear drift the
estimate is e^{(t-s)B1'} B2' and its transpose is B2 e^{(t-s)B1}.
"""

from __future__ import annotations

import numpy as np

from ..catalog.models import DriftModel
from ..engine.core import LawProxy, TimeGrid, flow_steps, make_proxy
from .estimates import BBKernel, batch_stats


def estimate_BB(model: DriftModel, mu, s: float, t: float, x0, x1, m: int = 10_000, seed: int = 0,
                dt: float = 1e-3, mode: str = "particle", m_proxy: int = 4096,
                proxy: LawProxy | None = None, scheme: str = "expm", batch: int = 25_000) -> BBKernel:
    """Monte-Carlo BB with the expm tangent (exact for constant b1) by default."""
    if not t >= s:
        raise ValueError("estimate_BB needs t >= s")
    d = model.dim
    x0 = np.asarray(x0, float).reshape(d)
    x1 = np.asarray(x1, float).reshape(1, d)
    if t == s:
        val = np.asarray(model.b2(x1, x0[None]), float).reshape(d, d)
        return BBKernel(val, np.zeros((d, d)), 0)
    proxy = proxy or make_proxy(model, mu, TimeGrid(s, t, dt), seed, m_proxy, mode)
    vals = []
    for lo in range(0, m, batch):
        n = min(batch, m - lo)
        for st in flow_steps(model, proxy, np.tile(x0, (n, 1)), seed, tangent=scheme, offset=lo):
            pass
        b2 = model.b2(np.tile(x1, (n, 1)), st.x)
        vals.append(np.einsum("mak,mkj->maj", st.jac, b2).reshape(n, d * d))
    mean, se = batch_stats(np.concatenate(vals))
    return BBKernel(mean.reshape(d, d), se.reshape(d, d), m)
