"""First and second variation of the flow x -> X^mu_{s,t}(x)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..catalog.models import DriftModel
from ..engine.core import FlowSample, LawProxy, TimeGrid, flow_steps


@dataclass
class TangentFlow:
    first: list       # d x d matrices at the checkpoints, first[a, j] = d X^j / d x_a
    second: list | None
    grid: TimeGrid
    times: list


def tangent_paths(model: DriftModel, proxy: LawProxy, x, seed: int, replica: int = 0,
                  scheme: str = "euler", second: bool = True, offset: int = 0):
    """Tangents of M copies along their own paths; returns {step: (x, jac, hess)} at checkpoints."""
    if second:
        try:
            model.b11(np.zeros((1, model.dim)), np.zeros((1, model.dim)))
        except NotImplementedError:
            second = False
    want = set(proxy.grid.checkpoint_steps)
    out = {}
    for st in flow_steps(model, proxy, x, seed, replica, tangent=scheme, second=second, offset=offset):
        if st.k in want:
            out[st.k] = (st.x.copy(), st.jac.copy(), None if st.hess is None else st.hess.copy())
    return out


def tangent_flow(model: DriftModel, flow: FlowSample, seed: int = 0, replica: int = 0,
                 scheme: str = "euler", index: int = 0) -> TangentFlow:
    """Tangent along the path of ``flow``, replayed from the same noise key.

    ``seed``, ``replica`` and ``index`` must be those used to simulate the flow so that
    the replay sees the same increments. Models without second derivatives return
    ``second=None``.
    """
    proxy = flow.law_proxy
    res = tangent_paths(model, proxy, flow.start_point[None], seed, replica, scheme,
                        second=True, offset=index)
    steps = proxy.grid.checkpoint_steps
    first = [res[k][1][0] for k in steps]
    second = None if res[steps[0]][2] is None else [res[k][2][0] for k in steps]
    return TangentFlow(first, second, proxy.grid, list(flow.times))


def fd_gradient_check(model: DriftModel, proxy: LawProxy, x, h: float = 1e-4, seed: int = 0,
                      scheme: str = "euler") -> dict:
    """Compare the tangent at t_end with central differences of the flow under identical noise."""
    x = np.asarray(x, float).reshape(model.dim)
    d = model.dim
    starts = [x]
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        starts += [x + e, x - e]
    ends = []
    for p in starts:
        # every start point replays particle index 0 of the same stream
        last = None
        for st in flow_steps(model, proxy, p[None], seed, tangent=scheme if p is x else None):
            last = st
        ends.append(last)
    J = ends[0].jac[0]
    fd = np.stack([(ends[1 + 2 * k].x[0] - ends[2 + 2 * k].x[0]) / (2 * h) for k in range(d)])
    err = np.abs(fd - J)
    scale = max(np.max(np.abs(J)), 1e-300)
    return {"max_abs_error": float(err.max()), "max_rel_error": float(err.max() / scale),
            "jacobian": J.tolist(), "finite_difference": fd.tolist(), "h": h, "scheme": scheme}
