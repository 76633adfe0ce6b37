"""Propagation of chaos: bias and L2 error of m_t^N(f) against the limiting law.

For the linear drift every replica also carries N independent copies of the
nonlinear flow, driven by the same initial draws and the same increments as the
particle system (synchronous coupling), with the exact law mean of the discrete
scheme in their drift. The bias is then estimated as
    mean over replicas of [m_t^N(f) - m_t^{iid}(f)],
which has the same expectation as m_t^N(f) - phi_t(f) for the discrete scheme, while
the O(1/sqrt(N)) fluctuations shared by both terms cancel. The plain estimator
mean_r m_t^N(f) - phi_t(f) is reported next to it.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import expm

from ..catalog.closed_form import noise_covariance
from ..catalog.models import LinearDrift, load_model
from ..engine.core import TimeGrid, _map_replicas, initial_moments, sample_initial, simulate_law_proxy
from ..functions import get_function
from ..rng import DYNAMICS, GaussianStream, StreamKey
from .config import ExperimentConfig
from .fitting import fit_loglog_slope
from .results import ExperimentResult, try_fit

COLUMNS = ["t", "N", "f", "bias", "bias_stderr", "bias_plain", "l2err", "estimator", "replicas"]


def discrete_linear_law(model: LinearDrift, mu0, grid: TimeGrid):
    """Mean and covariance of one Euler-Maruyama copy of the nonlinear flow at every step."""
    d = model.dim
    m, C = initial_moments(mu0, d)
    F = np.eye(d) + grid.h * model.B1
    G = np.eye(d) + grid.h * (model.B1 + model.B2)
    means, covs = [m], [C]
    for _ in range(grid.n_steps):
        m = G @ m
        C = F @ C @ F.T + grid.h * np.eye(d)
        means.append(m)
        covs.append(C)
    return np.array(means), np.array(covs)


def continuous_linear_value(model: LinearDrift, mu0, t, f) -> float:
    m, C = initial_moments(mu0, model.dim)
    E1 = expm(t * model.B1)
    return get_function(f).gauss_value(expm(t * (model.B1 + model.B2)) @ m,
                                       E1 @ C @ E1.T + noise_covariance(model.B1, t))


def _run_ladder_point(model, mu0, n, grid, seed, replicas, fns, law_means, coupled):
    """Values m^N_t(f) (and m^{iid}_t(f) when coupled) per replica at the checkpoints."""
    d = model.dim
    R = replicas
    x = np.stack([sample_initial(mu0, n, d, StreamKey(seed, r)).positions for r in range(R)])
    y = x.copy() if coupled else None
    streams = [GaussianStream(seed, r, DYNAMICS) for r in range(R)]
    sq = math.sqrt(grid.h)
    want = set(grid.checkpoint_steps)
    sys_vals, iid_vals = {}, {}
    w = np.full(n, 1.0 / n)
    for k in range(grid.n_steps + 1):
        if k in want:
            sys_vals[k] = np.array([[fn.value(x[r]).mean() for r in range(R)] for fn in fns])
            if coupled:
                iid_vals[k] = np.array([[fn.value(y[r]).mean() for r in range(R)] for fn in fns])
        if k == grid.n_steps:
            break
        dw = sq * np.stack([g.normals(k, n, d) for g in streams])
        if model.affine_in_x2:
            drift = model.drift_mean(x, x.mean(axis=1, keepdims=True))
        else:
            drift = np.stack([model.drift_against(x[r], x[r], w) for r in range(R)])
        if coupled:
            y = y + model.drift_mean(y, law_means[k][None, None, :]) * grid.h + dw
        x = x + drift * grid.h + dw
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite particle state")
    return sys_vals, iid_vals


def run_chaos(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    model = load_model(cfg.model)
    g = cfg.grid
    grid = TimeGrid(g.s, g.t_end, g.dt, g.checkpoints or [g.t_end])
    steps = grid.checkpoint_steps
    times = [grid.s + k * grid.h for k in steps]
    fns = [get_function(f) for f in cfg.functions]
    R = cfg.replicas
    linear = isinstance(model, LinearDrift)
    coupled = linear and cfg.params.get("coupling", True)
    summary = {}
    if linear:
        law_means, law_covs = discrete_linear_law(model, cfg.mu0, grid)
        ref = {(k, fn.name): fn.gauss_value(law_means[k], law_covs[k]) for k in steps for fn in fns}
        summary["reference"] = "exact law of the Euler-Maruyama scheme"
        summary["continuous_reference"] = {f"{fn.name}@t={t:g}": continuous_linear_value(model, cfg.mu0, t - grid.s, fn)
                                           for t in times for fn in fns}
    else:
        m_ref = int(cfg.params.get("m_reference", 16 * max(cfg.n_ladder)))
        if m_ref < 16 * max(cfg.n_ladder):
            raise ValueError("the proxy reference needs M >= 16 * max N")
        prox = simulate_law_proxy(model, cfg.mu0, m_ref, grid, cfg.seed + 1, replica=10**6, store_atoms=False)
        law_means = None
        ref = {(k, fn.name): float(prox.weights @ fn.value(prox.snapshots[k])) for k in steps for fn in fns}
        summary["reference"] = f"self-interacting proxy with M={m_ref}"
    ref_json = {f"{name}@t={grid.s + k * grid.h:g}": v for (k, name), v in ref.items()}
    summary["reference_values"] = ref_json

    runs = _map_replicas(lambda n: _run_ladder_point(model, cfg.mu0, n, grid, cfg.seed, R, fns, law_means, coupled),
                         list(cfg.n_ladder), threads)
    rows = []
    for k, t in zip(steps, times):
        for n in cfg.n_ladder:
            sys_vals, iid_vals = runs[n]
            for j, fn in enumerate(fns):
                v = sys_vals[k][j]
                r0 = ref[(k, fn.name)]
                plain = float(np.mean(v) - r0)
                l2 = float(np.sqrt(np.mean((v - r0) ** 2)))
                if coupled:
                    diff = v - iid_vals[k][j]
                    bias = float(np.mean(diff))
                    se = float(np.std(diff, ddof=1) / math.sqrt(R)) if R > 1 else 0.0
                    est = "coupled"
                else:
                    bias = plain
                    se = float(np.std(v, ddof=1) / math.sqrt(R)) if R > 1 else 0.0
                    est = "plain"
                rows.append({"t": t, "N": n, "f": fn.name, "bias": abs(bias), "bias_stderr": se,
                             "bias_plain": abs(plain), "l2err": l2, "estimator": est, "replicas": R})

    crit, prm = cfg.criteria, cfg.params
    t_fit = float(prm.get("fit_time", times[0]))
    k_fit = grid.step_of(t_fit)
    fits, checks = {}, {}
    bias_f = prm.get("bias_function", fns[0].name)
    l2_f = prm.get("l2_function", fns[0].name)
    sel = lambda f, t: [r for r in rows if r["f"] == f and abs(r["t"] - t) < 1e-9]
    t_fit = grid.s + k_fit * grid.h
    bias_fit, why_b = try_fit(fit_loglog_slope, [(r["N"], r["bias"]) for r in sel(bias_f, t_fit)])
    l2_fit, why_l = try_fit(fit_loglog_slope, [(r["N"], r["l2err"]) for r in sel(l2_f, t_fit)])
    plain_fit, _ = try_fit(fit_loglog_slope, [(r["N"], r["bias_plain"]) for r in sel(bias_f, t_fit)])
    fits.update({"bias_slope": bias_fit, "l2_slope": l2_fit, "bias_plain_slope": plain_fit})
    for name, why in (("bias_fit_refused", why_b), ("l2_fit_refused", why_l)):
        if why:
            summary[name] = why
    if "l2_slope_range" in crit:
        lo, hi = crit["l2_slope_range"]
        checks["l2_slope"] = l2_fit is not None and lo <= l2_fit.estimate <= hi
    if "bias_slope_range" in crit:
        lo, hi = crit["bias_slope_range"]
        checks["bias_slope"] = bias_fit is not None and lo <= bias_fit.estimate <= hi
    if "flatness_max_rel_diff" in crit:
        ta, tb = prm.get("flatness_times", [times[0], times[-1]])
        # level of c / sqrt(N): geometric mean of l2err * sqrt(N) over the ladder
        lev = {}
        for tt in (ta, tb):
            rs = sel(l2_f, grid.s + grid.step_of(tt) * grid.h)
            lev[tt] = float(np.exp(np.mean([math.log(r["l2err"] * math.sqrt(r["N"])) for r in rs])))
        rel = abs(lev[tb] - lev[ta]) / lev[ta]
        summary["flatness"] = {"levels": {f"{k:g}": v for k, v in lev.items()}, "relative_difference": rel}
        checks["flatness"] = rel < float(crit["flatness_max_rel_diff"])
    if crit.get("l2_ge_bias", True):
        checks["l2_ge_bias"] = all(r["l2err"] >= max(r["bias"], r["bias_plain"]) for r in rows)
    return ExperimentResult("chaos", COLUMNS, rows, fits, checks, summary, cfg.hash())
