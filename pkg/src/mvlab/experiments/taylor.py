"""Taylor remainders of mu -> phi_{s,t}(mu)(f) and of mu -> X^mu_{s,t}(x) along mu_eps = mu0 + eps (delta_y - mu0).

Functional remainders (linear drift, closed-form routes):
    R1(eps) = |phi(mu_eps)(f) - phi(mu0)(f) - eps D|
    R2(eps) = |phi(mu_eps)(f) - phi(mu0)(f) - eps D - eps^2/2 D2|
with D, D2 the centered first and second derivatives at (y) and (y, y).

Flow remainder (any model): the paths X^{mu_eps}_{s,t}(x) share their noise; the
eps-derivative at 0 is a central difference with step ``flow_fd_step`` under the same
noise, and the remainder is the RMS over paths of |X^{eps} - X^{0} - eps dX|.
A remainder that vanishes to solver tolerance has no meaningful log-log slope;
the fit is refused and reported as such.
"""

from __future__ import annotations

import numpy as np

from ..catalog.models import LinearDrift, load_model
from ..engine.core import TimeGrid, exact_linear_proxy, flow_steps, initial_moments, sample_initial, simulate_law_proxy
from ..functions import get_function
from ..rng import AUX, StreamKey
from ..sensitivity.derivatives import linear_first_order, linear_phi_mixture, linear_second_order
from .config import ExperimentConfig
from .fitting import fit_loglog_slope
from .results import ExperimentResult, try_fit

COLUMNS = ["quantity", "f", "eps", "value", "R1", "R2"]
DEFAULT_LADDER = [0.4, 0.2, 0.1, 0.05]


def functional_remainders(model: LinearDrift, mu0, s, t, f, y, ladder):
    m0, C0 = initial_moments(mu0, model.dim)
    y = np.asarray(y, float).reshape(model.dim)
    base = linear_phi_mixture(model, [(1.0, m0, C0)], s, t, f)
    D = linear_first_order(model, mu0, s, t, f, y)
    D2 = linear_second_order(model, mu0, s, t, f, y, y)
    rows = []
    for e in ladder:
        val = linear_phi_mixture(model, [(1.0 - e, m0, C0), (e, y, None)], s, t, f)
        r1 = val - base - e * D
        rows.append({"eps": e, "value": val, "R1": abs(r1), "R2": abs(r1 - 0.5 * e * e * D2)})
    return rows, {"phi0": base, "D": D, "D2": D2}


def _eps_proxies(model, mu0, y, eps_list, grid, seed, M, mode):
    d = model.dim
    out = {}
    if mode == "exact":
        m0, _ = initial_moments(mu0, d)
        for e in eps_list:
            out[e] = exact_linear_proxy(model, {"kind": "dirac", "x": ((1 - e) * m0 + e * y).tolist()}, grid)
        return out
    atoms0 = sample_initial(mu0, M, d, StreamKey(seed, 0, stream=AUX)).positions
    atoms = np.concatenate([atoms0, np.tile(y, (M, 1))])
    for e in eps_list:
        w = np.concatenate([np.full(M, (1 - e) / M), np.full(M, e / M)])
        out[e] = simulate_law_proxy(model, None, 0, grid, seed, atoms0=atoms, weights=w)
    return out


def flow_remainders(model, mu0, s, t, x, y, ladder, seed, dt, paths, M, mode, fd_step):
    d = model.dim
    grid = TimeGrid(s, t, dt)
    y = np.asarray(y, float).reshape(d)
    x0 = np.tile(np.asarray(x, float).reshape(1, d), (paths, 1))
    eps_all = sorted(set([0.0, fd_step, -fd_step] + list(ladder)))
    proxies = _eps_proxies(model, mu0, y, eps_all, grid, seed, M, mode)
    ends = {}
    for e in eps_all:
        for st in flow_steps(model, proxies[e], x0, seed):
            pass
        ends[e] = st.x
    dX = (ends[fd_step] - ends[-fd_step]) / (2 * fd_step)
    rows = []
    for e in ladder:
        rem = ends[e] - ends[0.0] - e * dX
        rows.append({"eps": e, "value": float(np.sqrt(np.mean(np.sum((ends[e] - ends[0.0]) ** 2, axis=1)))),
                     "R1": float(np.sqrt(np.mean(np.sum(rem ** 2, axis=1)))), "R2": float("nan")})
    return rows, {"dX_mean": dX.mean(axis=0).tolist()}


def _slope(rows, key, tol):
    pts = [(r["eps"], r[key]) for r in rows]
    if all(v <= tol for _, v in pts):
        return None, f"{key} vanishes to solver tolerance ({tol:g}) on the whole ladder"
    return try_fit(fit_loglog_slope, pts)


def run_taylor(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    model = load_model(cfg.model)
    prm, crit = cfg.params, cfg.criteria
    s, t = cfg.grid.s, cfg.grid.t_end
    d = model.dim
    y = np.broadcast_to(np.asarray(prm.get("y", 1.0), float), (d,)).copy()
    ladder = [float(e) for e in prm.get("eps_ladder", DEFAULT_LADDER)]
    tol = float(prm.get("solver_tol", 1e-12))
    rows, fits, checks, summary = [], {}, {}, {}
    crit_f = prm.get("criteria_function", cfg.functions[0])
    if prm.get("functional", isinstance(model, LinearDrift)):
        if not isinstance(model, LinearDrift):
            raise ValueError("functional remainders use the closed-form routes of the linear drift")
        for f in cfg.functions:
            fr, info = functional_remainders(model, cfg.mu0, s, t, f, y, ladder)
            summary[f"functional_{f}"] = info
            for r in fr:
                rows.append({"quantity": "functional", "f": get_function(f).name,
                             **{k: float(v) for k, v in r.items()}})
            scale = tol * max(1.0, abs(info["phi0"]))
            for key in ("R1", "R2"):
                fit, why = _slope(fr, key, scale)
                fits[f"{key}_slope_{f}"] = fit
                if why:
                    summary[f"{key}_slope_{f}_refused"] = why
            thr = float(prm.get("ordering_threshold", max(ladder)))
            checks[f"r2_le_r1_{f}"] = all(r["R2"] <= r["R1"] + scale for r in fr if r["eps"] <= thr)
            if f in crit.get("zero_remainder_functions", []):
                checks[f"zero_remainders_{f}"] = all(r["R1"] <= scale and r["R2"] <= scale for r in fr)
        for key, cname in (("R1", "r1_slope"), ("R2", "r2_slope")):
            if cname in crit:
                target, tl = crit[cname]
                fit = fits.get(f"{key}_slope_{crit_f}")
                checks[cname] = fit is not None and abs(fit.estimate - target) <= tl
    if prm.get("flow", True):
        x = prm.get("x", 0.5)
        mode = cfg.mode if isinstance(model, LinearDrift) else "particle"
        fr, info = flow_remainders(model, cfg.mu0, s, t, x, y, ladder, cfg.seed, cfg.grid.dt,
                                   int(prm.get("flow_paths", 256)), int(prm.get("flow_proxy_m", 2048)),
                                   mode, float(prm.get("flow_fd_step", 1e-3)))
        summary["flow"] = dict(info, mode=mode)
        for r in fr:
            rows.append({"quantity": "flow", "f": "", **r})
        # the derivative is a difference quotient, so rounding enters at eps_machine / fd_step
        ftol = float(prm.get("flow_tol", 1e-9))
        scale = ftol * max(1.0, max(r["value"] for r in fr))
        fit, why = _slope(fr, "R1", scale)
        fits["flow_slope"] = fit
        if why:
            summary["flow_slope_refused"] = why
        if "flow_slope" in crit:
            target, tl = crit["flow_slope"]
            checks["flow_slope"] = fit is not None and abs(fit.estimate - target) <= tl
    return ExperimentResult("taylor", COLUMNS, rows, fits, checks, summary, cfg.hash())
