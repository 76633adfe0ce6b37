"""Wasserstein contraction between the laws started from mu0 and mu1."""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.linalg import expm, sqrtm
from scipy.special import ndtr

from ..catalog.closed_form import noise_covariance
from ..catalog.models import LinearDrift, load_model
from ..catalog.spectral import spectral_scan
from ..engine.core import TimeGrid, initial_moments, particle_system_replicas
from ..metrics import EmpiricalMeasure, wasserstein
from .config import ExperimentConfig
from .fitting import fit_exponential_rate
from .results import ExperimentResult, try_fit

COLUMNS = ["t", "W1", "W2", "mode"]


def gaussian_w2(m0, C0, m1, C1) -> float:
    """W2 between Gaussians (Bures formula; 1d reduces to sqrt(dm^2 + ds^2))."""
    dm = np.asarray(m1, float) - np.asarray(m0, float)
    if C0.shape[0] == 1:
        ds = math.sqrt(max(C0[0, 0], 0)) - math.sqrt(max(C1[0, 0], 0))
        return float(math.sqrt(dm @ dm + ds * ds))
    r0 = np.real(sqrtm(C0))
    cross = np.real(sqrtm(r0 @ C1 @ r0))
    return float(math.sqrt(max(dm @ dm + np.trace(C0 + C1 - 2 * cross), 0.0)))


def gaussian_w1(m0, C0, m1, C1) -> float:
    """W1 between Gaussians on the line (folded normal of the quantile gap); equal-covariance case in d > 1."""
    dm = np.asarray(m1, float) - np.asarray(m0, float)
    if C0.shape[0] == 1:
        a = float(dm[0])
        b = abs(math.sqrt(max(C1[0, 0], 0)) - math.sqrt(max(C0[0, 0], 0)))
        if b == 0:
            return abs(a)
        return float(b * math.sqrt(2 / math.pi) * math.exp(-a * a / (2 * b * b)) + a * (1 - 2 * ndtr(-a / b)))
    if np.allclose(C0, C1, atol=1e-14):
        return float(np.linalg.norm(dm))
    return float("nan")


def exact_laws(model: LinearDrift, mu, times):
    m, S0 = initial_moments(mu, model.dim)
    out = []
    for t in times:
        E1 = expm(t * model.B1)
        out.append((expm(t * (model.B1 + model.B2)) @ m, E1 @ S0 @ E1.T + noise_covariance(model.B1, t)))
    return out


def run_contraction(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    model = load_model(cfg.model)
    g = cfg.grid
    grid = TimeGrid(g.s, g.t_end, g.dt, g.checkpoints or list(np.linspace(g.s, g.t_end, 9)))
    times = [grid.s + k * grid.h for k in grid.checkpoint_steps]
    report = spectral_scan(model, n_probes=int(cfg.params.get("n_probes", 512)), seed=cfg.seed)
    if not report.h_satisfied:
        warnings.warn("condition (H) does not hold on the probe box; running anyway", RuntimeWarning)
    rows = []
    if cfg.mode == "exact":
        if not isinstance(model, LinearDrift):
            raise ValueError("exact-moments contraction needs the linear drift")
        rel = [t - grid.s for t in times]
        L0, L1 = exact_laws(model, cfg.mu0, rel), exact_laws(model, cfg.mu1, rel)
        for t, (m0, C0), (m1, C1) in zip(times, L0, L1):
            rows.append({"t": t, "W1": gaussian_w1(m0, C0, m1, C1), "W2": gaussian_w2(m0, C0, m1, C1),
                         "mode": "exact"})
    else:
        n = int(cfg.params.get("n_particles", cfg.n_ladder[-1] if cfg.n_ladder else 10_000))
        # same seed and replica on both sides: synchronous coupling of noise and initial draws
        c0 = particle_system_replicas(model, cfg.mu0, n, grid, cfg.seed, [0], threads=threads)[0]
        c1 = particle_system_replicas(model, cfg.mu1, n, grid, cfg.seed, [0], threads=threads)[0]
        for t, x0, x1 in zip(times, c0, c1):
            a, b = EmpiricalMeasure.uniform(x0), EmpiricalMeasure.uniform(x1)
            rows.append({"t": t, "W1": wasserstein(a, b, 1), "W2": wasserstein(a, b, 2), "mode": "particle",
                         "n": n})
    t_lo = float(cfg.params.get("fit_t_min", grid.s))
    t_hi = float(cfg.params.get("fit_t_max", grid.t_end))
    sel = [r for r in rows if t_lo - 1e-12 <= r["t"] <= t_hi + 1e-12]
    fits, checks, summary = {}, {}, {"lambda0": report.lambda0, "lambda1": report.lambda1,
                                     "lambda12": report.lambda12, "lambda12_hat": report.lambda12_hat,
                                     "h_satisfied": report.h_satisfied}
    for name in ("W2", "W1"):
        pts = [(r["t"], r[name]) for r in sel if np.isfinite(r[name])]
        fit, why = try_fit(fit_exponential_rate, pts)
        fits[f"{name}_rate"] = fit
        if why:
            summary[f"{name}_fit_refused"] = why
    if all(r["W2"] == 0 for r in rows):
        summary["identical_laws"] = True
    crit = cfg.criteria
    w2 = fits["W2_rate"]
    if "w2_rate" in crit:
        tol = float(crit.get("w2_rate_abs_tol", 0.0)) or float(crit.get("w2_rate_rel_tol", 0.1)) * abs(crit["w2_rate"])
        checks["w2_rate"] = w2 is not None and abs(w2.estimate - float(crit["w2_rate"])) <= tol
    if crit.get("w2_rate_at_least_lambda0"):
        checks["w2_rate_at_least_lambda0"] = w2 is not None and w2.estimate >= report.lambda0 * (1 - 1e-6)
    if crit.get("w1_rate_at_least_lambda12_hat"):
        w1 = fits["W1_rate"]
        checks["w1_rate_at_least_lambda12_hat"] = w1 is not None and w1.estimate >= report.lambda12_hat * (1 - 1e-6)
    if cfg.mode == "exact" and report.lambda0 > 0 and crit.get("w2_monotone", True):
        w = [r["W2"] for r in rows]
        checks["w2_monotone"] = all(b < a for a, b in zip(w, w[1:])) or all(v == 0 for v in w)
    return ExperimentResult("contraction", COLUMNS + (["n"] if cfg.mode == "particle" else []), rows,
                            fits, checks, summary, cfg.hash())
