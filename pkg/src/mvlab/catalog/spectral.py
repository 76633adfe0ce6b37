"""Probe-based estimation of the contraction constants.

Over a box of (x1, x2) pairs we estimate
    lambda0   = -sup lmax(A_sym),      A = [[b1(x1,x2), b2(x2,x1)], [b2(x1,x2), b1(x2,x1)]],
    lambda1   = -sup lmax(b1_sym),
    b2_norm   =  sup ||b2||_2,
    lambda12  =  lambda1 - b2_norm,
and the three-term constant sup[lmax(A_sym) + ||b2_sym||_2 + ||b2_asym||_2], with
b2_sym(x1,x2) = (b2(x1,x2) + b2(x2,x1)')/2 and b2_asym the antisymmetric counterpart.

All suprema run over one common point set, closed under (x1, x2) -> (x2, x1), so
the ordering lambda1 >= lambda0 >= lambda12 holds exactly on the estimates.
The verdict is only as good as the box: a supremum found on a box is a lower
bound for the supremum over the whole space.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize

from .models import DriftModel, assemble_A


@dataclass
class SpectralReport:
    lambda0: float
    lambda1: float
    b2_norm: float
    lambda12: float
    lambda12_hat: float
    h_satisfied: bool
    probes: list
    domain_box: list
    lambda12_hat_raw: float = float("nan")
    n_evaluated: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _sym(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def _lmax_sym(M):
    return np.linalg.eigvalsh(_sym(M))[..., -1]


def _opnorm(M):
    return np.linalg.norm(M, ord=2, axis=(-2, -1))


def local_quantities(model: DriftModel, x1: np.ndarray, x2: np.ndarray) -> dict:
    """Per-point values of the four functionals whose suprema define the constants."""
    A = assemble_A(model, x1, x2)
    b1 = model.b1(x1, x2)
    b2 = model.b2(x1, x2)
    b2r = np.swapaxes(model.b2(x2, x1), -1, -2)
    return {
        "A": _lmax_sym(A),
        "b1": _lmax_sym(b1),
        "b2": _opnorm(b2),
        "hat": _lmax_sym(A) + _opnorm(0.5 * (b2 + b2r)) + _opnorm(0.5 * (b2 - b2r)),
    }


def _normalize_box(box, d: int) -> np.ndarray:
    box = np.asarray(box, float)
    if box.ndim == 1:
        box = np.tile(box.reshape(1, 2), (2 * d, 1))
    elif box.shape == (d, 2):
        box = np.vstack([box, box])
    if box.shape != (2 * d, 2):
        raise ValueError(f"domain box must have shape (2,), ({d},2) or ({2 * d},2); got {box.shape}")
    if np.any(box[:, 1] < box[:, 0]):
        raise ValueError("domain box has lower > upper bound")
    return box


def _latin_hypercube(n: int, k: int, seed: int) -> np.ndarray:
    """One point per stratum in each coordinate, strata paired by independent permutations."""
    rng = np.random.default_rng(seed)
    perms = np.stack([rng.permutation(n) for _ in range(k)], axis=1)
    return (perms + rng.random((n, k))) / n


def spectral_scan(model: DriftModel, box=(-5.0, 5.0), n_probes: int = 512, seed: int = 0,
                  refine: int = 4) -> SpectralReport:
    """Latin-hypercube probes of the box followed by local ascent from the worst probes."""
    d = model.dim
    B = _normalize_box(box, d)
    lo, hi = B[:, 0], B[:, 1]
    pts = lo + _latin_hypercube(n_probes, 2 * d, seed) * (hi - lo)
    pts = np.vstack([pts, 0.5 * (lo + hi)])

    def evaluate(P):
        x1, x2 = P[:, :d], P[:, d:]
        return local_quantities(model, x1, x2)

    q = evaluate(pts)
    extra = []
    # constant Jacobians (linear drift) leave nothing to ascend
    if refine > 0 and any(np.ptp(q[k]) > 0 for k in q):
        for key in ("A", "b1", "b2", "hat"):
            order = np.argsort(q[key])[::-1][:refine]
            for i in order:
                def neg(z, key=key):
                    z = np.clip(z, lo, hi)
                    return -float(evaluate(z[None])[key][0])
                res = minimize(neg, pts[i], method="Nelder-Mead",
                               options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 400 * d})
                extra.append(np.clip(res.x, lo, hi))
    if extra:
        pts = np.vstack([pts, np.array(extra)])
    # close the point set under the swap (x1, x2) -> (x2, x1)
    pts = np.vstack([pts, np.concatenate([pts[:, d:], pts[:, :d]], axis=1)])
    q = evaluate(pts)

    sup_A, sup_b1, sup_b2, sup_hat = (float(np.max(q[k])) for k in ("A", "b1", "b2", "hat"))
    lambda0 = -sup_A
    lambda1 = -sup_b1
    lambda12 = lambda1 - sup_b2
    hat_raw = -sup_hat
    # built-in drifts are autonomous, so every probe carries t = 0
    probes = []
    for k in ("A", "b1", "b2", "hat"):
        p = pts[int(np.argmax(q[k]))]
        probes.append({"quantity": k, "t": 0.0, "x1": p[:d].tolist(), "x2": p[d:].tolist()})
    return SpectralReport(
        lambda0=lambda0, lambda1=lambda1, b2_norm=sup_b2, lambda12=lambda12,
        lambda12_hat=max(lambda12, hat_raw), lambda12_hat_raw=hat_raw,
        h_satisfied=bool(lambda0 > 0 and lambda12 > 0),
        probes=probes, domain_box=B.tolist(), n_evaluated=int(pts.shape[0]),
    )
