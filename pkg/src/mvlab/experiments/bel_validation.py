"""BEL gradients against closed-form gradients over a ladder of horizons.

For the linear drift grad P_{s,t}(f)(x) = e^{(t-s)B1'} E grad f(X_{s,t}(x)), with X_{s,t}(x)
Gaussian and every expectation in closed form or Gauss-Hermite. For other models the
oracle is a common-noise central difference of the Monte-Carlo semigroup.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import expm

from ..catalog.closed_form import noise_covariance
from ..catalog.models import LinearDrift, load_model
from ..catalog.spectral import spectral_scan
from ..engine.core import TimeGrid, flow_steps, initial_moments, make_proxy
from ..functions import get_function
from ..sensitivity.bel import BelWeight, bel_gradient
from .config import ExperimentConfig
from .fitting import fit_exponential_rate, fit_loglog_slope
from .results import ExperimentResult, try_fit

COLUMNS = ["t", "f", "estimate", "stderr", "sample_sd", "oracle", "oracle_stderr", "z", "agree", "m"]


def linear_gradient_oracle(model: LinearDrift, mu, s, t, x, f) -> np.ndarray:
    m, _ = initial_moments(mu, model.dim)
    T = t - s
    E1 = expm(T * model.B1)
    K = expm(T * (model.B1 + model.B2)) - E1
    mean = E1 @ np.asarray(x, float).reshape(model.dim) + K @ m
    return E1.T @ get_function(f).gauss_grad(mean, noise_covariance(model.B1, T))


def fd_gradient_oracle(model, proxy, x, f, m, seed, h=1e-3):
    """Central difference of E f(X(x)) under common noise; returns (value, stderr) per coordinate."""
    fn = get_function(f)
    d = model.dim
    x = np.asarray(x, float).reshape(d)
    val, se = np.zeros(d), np.zeros(d)
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        out = []
        for p in (x + e, x - e):
            for st in flow_steps(model, proxy, np.tile(p, (m, 1)), seed):
                pass
            out.append(fn.value(st.x))
        q = (out[0] - out[1]) / (2 * h)
        val[k], se[k] = q.mean(), q.std(ddof=1) / math.sqrt(m)
    return val, se


def run_bel_validation(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    model = load_model(cfg.model)
    prm, crit = cfg.params, cfg.criteria
    s = cfg.grid.s
    horizons = [float(v) for v in prm.get("t_ladder", [0.25, 0.5, 1.0, 2.0])]
    m = int(prm.get("m", 100_000))
    k_se = float(crit.get("agree_k_stderr", 3.0))
    x = np.broadcast_to(np.asarray(prm.get("x", 0.5), float), (model.dim,)).copy()
    weight = BelWeight(float(prm.get("bel_epsilon", 0.5)))
    linear = isinstance(model, LinearDrift)
    mode = cfg.mode if linear else "particle"
    rows = []
    for t in horizons:
        grid = TimeGrid(s, s + t, cfg.grid.dt)
        proxy = make_proxy(model, cfg.mu0, grid, cfg.seed, int(prm.get("m_proxy", 4096)), mode)
        ests = bel_gradient(model, cfg.mu0, s, s + t, x, list(cfg.functions), m=m, weight=weight,
                            seed=cfg.seed, proxy=proxy)
        for f, est in zip(cfg.functions, ests):
            if linear:
                orc, orc_se = linear_gradient_oracle(model, cfg.mu0, s, s + t, x, f), np.zeros(model.dim)
            else:
                orc, orc_se = fd_gradient_oracle(model, proxy, x, f, int(prm.get("fd_m", m)), cfg.seed + 1)
            v, se = np.atleast_1d(est.value), np.atleast_1d(est.stderr)
            comb = np.sqrt(se ** 2 + orc_se ** 2)
            z = np.abs(v - orc) / np.where(comb > 0, comb, np.inf)
            agree = bool(np.all(np.abs(v - orc) <= k_se * comb))
            rows.append({"t": t, "f": get_function(f).name, "estimate": float(v[0]), "stderr": float(se[0]),
                         "sample_sd": float(se[0] * math.sqrt(m)), "oracle": float(orc[0]),
                         "oracle_stderr": float(orc_se[0]), "z": float(np.max(z)), "agree": agree, "m": m})
    fits, checks, summary = {}, {}, {}
    n_agree = sum(r["agree"] for r in rows)
    summary["agreement"] = {"cells": len(rows), "agree": n_agree}
    if "min_agree" in crit:
        checks["agreement"] = n_agree >= int(crit["min_agree"])
    elif crit.get("all_agree", True):
        checks["agreement"] = n_agree == len(rows)
    short = float(prm.get("short_horizon", 1.0))
    for f in cfg.functions:
        name = get_function(f).name
        sd_pts = [(r["t"], r["sample_sd"]) for r in rows if r["f"] == name and r["t"] <= short]
        fit, why = try_fit(fit_loglog_slope, sd_pts)
        fits[f"sd_vs_horizon_{name}"] = fit
        if why:
            summary[f"sd_vs_horizon_{name}_refused"] = why
    decay_f = prm.get("decay_function")
    if decay_f is not None:
        name = get_function(decay_f).name
        pts = [(r["t"], abs(r["estimate"])) for r in rows if r["f"] == name]
        fit, why = try_fit(fit_exponential_rate, pts)
        ofit, _ = try_fit(fit_exponential_rate, [(r["t"], abs(r["oracle"])) for r in rows if r["f"] == name])
        fits["gradient_decay"], fits["oracle_gradient_decay"] = fit, ofit
        rep = spectral_scan(model, seed=cfg.seed)
        summary["lambda1"] = rep.lambda1
        if "decay_min_frac_lambda1" in crit:
            checks["gradient_decay"] = fit is not None and fit.estimate >= float(crit["decay_min_frac_lambda1"]) * rep.lambda1
    return ExperimentResult("bel_validation", COLUMNS, rows, fits, checks, summary, cfg.hash())
