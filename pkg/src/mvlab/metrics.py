"""Weighted empirical measures and Wasserstein distances between them."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .rng import AUX, GaussianStream, StreamKey

EXACT_CAP = 256


@dataclass
class EmpiricalMeasure:
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=float)
        if a.ndim == 1:
            a = a.reshape(-1, 1)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.shape[0] != a.shape[0]:
            raise ValueError(f"{a.shape[0]} atoms but {w.shape[0]} weights")
        if not np.all(np.isfinite(a)) or not np.all(np.isfinite(w)):
            raise ValueError("atoms and weights must be finite")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1 within 1e-12")
        self.atoms, self.weights = a, w

    @classmethod
    def uniform(cls, atoms) -> "EmpiricalMeasure":
        a = np.asarray(atoms, dtype=float)
        n = a.shape[0]
        return cls(a, np.full(n, 1.0 / n))

    @classmethod
    def dirac(cls, x) -> "EmpiricalMeasure":
        return cls(np.asarray(x, float).reshape(1, -1), np.ones(1))

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def __len__(self) -> int:
        return self.atoms.shape[0]

    def mean(self) -> np.ndarray:
        return self.weights @ self.atoms


def _atoms_weights(mu):
    if isinstance(mu, EmpiricalMeasure):
        return mu.atoms, mu.weights
    m = EmpiricalMeasure.uniform(mu)
    return m.atoms, m.weights


def integrate(mu: EmpiricalMeasure, f) -> np.ndarray:
    """mu(f) = sum_i w_i f(x_i); ``f`` maps an (n, d) array to (n,) or (n, ...)."""
    vals = np.asarray(f(mu.atoms), dtype=float)
    if not np.all(np.isfinite(vals)):
        bad = int(np.argwhere(~np.isfinite(vals.reshape(len(mu), -1)))[0, 0])
        raise FloatingPointError(f"integrand is not finite at atom {bad}")
    return np.tensordot(mu.weights, vals, axes=(0, 0))


def moment_norm(mu: EmpiricalMeasure, p: float = 2) -> float:
    """(int |x|^p mu(dx))^{1/p}."""
    if p < 1:
        raise ValueError("moment order must be >= 1")
    r = np.linalg.norm(mu.atoms, axis=1)
    return float((mu.weights @ r**p) ** (1.0 / p))


def wasserstein_1d(mu, nu, p: int = 2) -> float:
    """W_p on the line by the quantile coupling of the two weighted measures."""
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    xa, wa = _atoms_weights(mu)
    xb, wb = _atoms_weights(nu)
    if xa.shape[1] != 1 or xb.shape[1] != 1:
        raise ValueError("wasserstein_1d needs one-dimensional atoms")
    xa, xb = xa[:, 0], xb[:, 0]
    if len(xa) == len(xb) and np.allclose(wa, wa[0]) and np.allclose(wb, wa[0]):
        diff = np.abs(np.sort(xa) - np.sort(xb))
        return float(np.mean(diff**p) ** (1.0 / p))
    ia, ib = np.argsort(xa, kind="stable"), np.argsort(xb, kind="stable")
    xa, wa, xb, wb = xa[ia], wa[ia], xb[ib], wb[ib]
    ca, cb = np.cumsum(wa), np.cumsum(wb)
    ca[-1] = cb[-1] = 1.0
    levels = np.union1d(ca, cb)
    dq = np.diff(np.concatenate([[0.0], levels]))
    qa = xa[np.minimum(np.searchsorted(ca, levels - 0.5 * dq), len(xa) - 1)]
    qb = xb[np.minimum(np.searchsorted(cb, levels - 0.5 * dq), len(xb) - 1)]
    return float((dq @ np.abs(qa - qb) ** p) ** (1.0 / p))


def _cost(xa, xb, p):
    delta = xa[:, None, :] - xb[None, :, :]
    return np.linalg.norm(delta, axis=-1) ** p


def wasserstein_exact(mu, nu, p: int = 2, cap: int = EXACT_CAP) -> float:
    """Exact W_p between uniform measures of equal size by optimal assignment."""
    xa, wa = _atoms_weights(mu)
    xb, wb = _atoms_weights(nu)
    n = xa.shape[0]
    if xb.shape[0] != n:
        raise ValueError("exact solver needs the same number of atoms on both sides")
    if n > cap:
        raise ValueError(f"exact solver is capped at N={cap}; got N={n}")
    if not (np.allclose(wa, 1.0 / n) and np.allclose(wb, 1.0 / n)):
        raise ValueError("exact solver needs uniform weights")
    C = _cost(xa, xb, p)
    r, c = linear_sum_assignment(C)
    return float(C[r, c].mean() ** (1.0 / p))


def wasserstein_bruteforce(mu, nu, p: int = 2) -> float:
    """Minimum over all permutations; only for tiny N (reference implementation)."""
    xa, _ = _atoms_weights(mu)
    xb, _ = _atoms_weights(nu)
    C = _cost(xa, xb, p)
    n = C.shape[0]
    best = min(sum(C[i, s[i]] for i in range(n)) for s in itertools.permutations(range(n)))
    return float((best / n) ** (1.0 / p))


def sliced_wasserstein(mu, nu, p: int = 2, n_proj: int = 64, key: StreamKey | None = None) -> float:
    """Monte Carlo sliced W_p over ``n_proj`` random directions drawn from ``key``."""
    xa, wa = _atoms_weights(mu)
    xb, wb = _atoms_weights(nu)
    d = xa.shape[1]
    if n_proj < 1:
        raise ValueError("n_proj must be >= 1")
    key = key or StreamKey(seed=0, stream=AUX)
    g = GaussianStream(key.seed, key.replica, key.stream).normals(key.step, n_proj, d)
    dirs = g / np.linalg.norm(g, axis=1, keepdims=True)
    acc = 0.0
    for th in dirs:
        pa = EmpiricalMeasure((xa @ th)[:, None], wa)
        pb = EmpiricalMeasure((xb @ th)[:, None], wb)
        acc += wasserstein_1d(pa, pb, p) ** p
    return float((acc / n_proj) ** (1.0 / p))


def wasserstein(mu, nu, p: int = 2) -> float:
    """Dispatch: exact on the line, assignment for small equal-size sets, sliced otherwise."""
    xa, _ = _atoms_weights(mu)
    xb, _ = _atoms_weights(nu)
    if xa.shape[1] == 1:
        return wasserstein_1d(mu, nu, p)
    if xa.shape[0] == xb.shape[0] and xa.shape[0] <= EXACT_CAP:
        return wasserstein_exact(mu, nu, p)
    return sliced_wasserstein(mu, nu, p)
