"""Euler-Maruyama for the particle system and for the nonlinear flow driven by a law proxy."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy.linalg import expm

from ..catalog.models import DriftModel, LinearDrift
from ..metrics import EmpiricalMeasure
from ..rng import DYNAMICS, INITIAL, PROXY, GaussianStream, StreamKey

DEFAULT_DT = 1e-3


@dataclass
class TimeGrid:
    s: float
    t_end: float
    dt: float = DEFAULT_DT
    checkpoints: Sequence[float] = ()

    def __post_init__(self):
        if not self.t_end >= self.s:
            raise ValueError(f"t_end={self.t_end} must be >= s={self.s}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        span = self.t_end - self.s
        # the endpoint is kept exact; the effective step h differs from dt by < dt/n
        self.n_steps = max(1, int(round(span / self.dt))) if span > 0 else 0
        self.h = span / self.n_steps if self.n_steps else 0.0
        cps = sorted(float(c) for c in self.checkpoints) if len(self.checkpoints) else [self.s, self.t_end]
        for c in cps:
            if c < self.s - 1e-12 or c > self.t_end + 1e-12:
                raise ValueError(f"checkpoint {c} outside [{self.s}, {self.t_end}]")
        self.checkpoints = cps

    @property
    def times(self) -> np.ndarray:
        return self.s + self.h * np.arange(self.n_steps + 1)

    def step_of(self, t: float) -> int:
        if self.n_steps == 0:
            return 0
        return int(round((t - self.s) / self.h))

    @property
    def checkpoint_steps(self) -> list[int]:
        return [self.step_of(c) for c in self.checkpoints]


@dataclass(frozen=True)
class ParticleEnsemble:
    positions: np.ndarray
    t: float = 0.0
    weights: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.positions, float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.shape[0] < 1:
            raise ValueError("ensemble needs at least one particle")
        bad = ~np.all(np.isfinite(x), axis=1)
        if bad.any():
            raise FloatingPointError(f"non-finite position for particle {int(np.argmax(bad))}")
        object.__setattr__(self, "positions", x)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def w(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n) if self.weights is None else self.weights

    def measure(self) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.positions, self.w())

    def mean(self) -> np.ndarray:
        return self.w() @ self.positions


# Initial laws ----------------------------------------------------------------

def _init_spec(spec) -> dict:
    if isinstance(spec, dict):
        return dict(spec)
    if isinstance(spec, (int, float)):
        return {"kind": "dirac", "x": float(spec)}
    raise ValueError(f"cannot interpret initial law {spec!r}")


def initial_moments(spec, d: int):
    """Mean and covariance of an initial law spec."""
    sp = _init_spec(spec)
    k = sp["kind"]
    if k == "dirac":
        return np.broadcast_to(np.asarray(sp["x"], float), (d,)).copy(), np.zeros((d, d))
    if k == "gaussian":
        m = np.broadcast_to(np.asarray(sp.get("mean", 0.0), float), (d,)).copy()
        C = np.asarray(sp.get("cov", 1.0), float)
        C = C * np.eye(d) if C.ndim == 0 else np.atleast_2d(C)
        return m, C
    if k == "uniform":
        lo = np.broadcast_to(np.asarray(sp["low"], float), (d,))
        hi = np.broadcast_to(np.asarray(sp["high"], float), (d,))
        return 0.5 * (lo + hi), np.diag((hi - lo) ** 2 / 12.0)
    if k == "two_point":
        a = np.broadcast_to(np.asarray(sp["a"], float), (d,))
        b = np.broadcast_to(np.asarray(sp["b"], float), (d,))
        p = float(sp.get("p", 0.5))
        m = (1 - p) * a + p * b
        return m, p * (1 - p) * np.outer(b - a, b - a)
    raise ValueError(f"unknown initial law kind {k!r}")


def sample_initial(spec, n: int, d: int, key: StreamKey) -> ParticleEnsemble:
    """i.i.d. draws from dirac / gaussian / uniform / two_point, deterministic in ``key``.

    Particle i reads the i-th entry of the INITIAL stream of (key.seed, key.replica).
    For two_point, ``p`` is the probability of ``b``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    sp = _init_spec(spec)
    k = sp["kind"]
    gs = GaussianStream(key.seed, key.replica, INITIAL + 8 * key.stream)
    if k == "dirac":
        x = np.broadcast_to(np.asarray(sp["x"], float), (d,))
        pos = np.tile(x, (n, 1))
    elif k == "gaussian":
        m, C = initial_moments(sp, d)
        C = 0.5 * (C + C.T)
        ev = np.linalg.eigvalsh(C)
        if ev[0] < -1e-12 * max(1.0, abs(ev[-1])):
            raise ValueError(f"covariance is not positive semi-definite (min eigenvalue {ev[0]:.3g})")
        w, V = np.linalg.eigh(C)
        L = V * np.sqrt(np.clip(w, 0, None))
        pos = m + gs.normals(key.step, n, d) @ L.T
    elif k == "uniform":
        lo = np.broadcast_to(np.asarray(sp["low"], float), (d,))
        hi = np.broadcast_to(np.asarray(sp["high"], float), (d,))
        pos = lo + gs.uniforms(key.step, n * d).reshape(n, d) * (hi - lo)
    elif k == "two_point":
        a = np.broadcast_to(np.asarray(sp["a"], float), (d,))
        b = np.broadcast_to(np.asarray(sp["b"], float), (d,))
        p = float(sp.get("p", 0.5))
        if not 0 <= p <= 1:
            raise ValueError("two_point probability must lie in [0, 1]")
        u = gs.uniforms(key.step, n)
        pos = np.where((u < p)[:, None], b, a)
    else:
        raise ValueError(f"unknown initial law kind {k!r}")
    return ParticleEnsemble(np.array(pos, float), t=0.0)


# Particle system -------------------------------------------------------------

def _check_finite(x: np.ndarray, what: str = "particle"):
    bad = ~np.all(np.isfinite(x.reshape(x.shape[0], -1)), axis=1)
    if bad.any():
        raise FloatingPointError(f"non-finite state for {what} {int(np.argmax(bad))}")


def em_step(ens: ParticleEnsemble, model: DriftModel, dt: float, key: StreamKey,
            noise_scale: float = 1.0) -> ParticleEnsemble:
    """One Euler-Maruyama step of the interacting system; ``noise_scale=0`` is the zero-noise hook."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = ens.positions
    drift = model.drift_against(x, x, ens.w())
    z = GaussianStream(key.seed, key.replica, DYNAMICS).normals(key.step, ens.n, ens.d)
    out = x + drift * dt + (math.sqrt(dt) * noise_scale) * z
    _check_finite(out)
    return ParticleEnsemble(out, t=ens.t + dt, weights=ens.weights)


def simulate_mean_field(model: DriftModel, init, n: int, grid: TimeGrid, seed: int,
                        replica: int = 0, noise_scale: float = 1.0) -> list[ParticleEnsemble]:
    """Snapshots of the N-particle system at the grid checkpoints."""
    ens = sample_initial(init, n, model.dim, StreamKey(seed, replica))
    ens = ParticleEnsemble(ens.positions, t=grid.s)
    want = grid.checkpoint_steps
    snaps = []
    for k in range(grid.n_steps + 1):
        while want and want[0] == k:
            snaps.append(ens)
            want.pop(0)
        if k == grid.n_steps:
            break
        ens = em_step(ens, model, grid.h, StreamKey(seed, replica, 0, k), noise_scale)
        ens = ParticleEnsemble(ens.positions, t=grid.s + (k + 1) * grid.h, weights=ens.weights)
    return snaps


def particle_system_replicas(model: DriftModel, init, n: int, grid: TimeGrid, seed: int,
                             replicas: Sequence[int], observe=None, threads: int = 1):
    """Run independent replicas; ``observe(replica, step, positions)`` is called at checkpoints.

    Returns a dict replica -> list of observations in checkpoint order. Replicas are
    keyed by their index, so the result does not depend on ``threads``.
    """
    want = set(grid.checkpoint_steps)
    observe = observe or (lambda r, k, x: x.copy())

    def run(r):
        x = sample_initial(init, n, model.dim, StreamKey(seed, r)).positions
        w = np.full(n, 1.0 / n)
        gs = GaussianStream(seed, r, DYNAMICS)
        sq = math.sqrt(grid.h)
        out = []
        for k in range(grid.n_steps + 1):
            if k in want:
                out.append(observe(r, k, x))
            if k == grid.n_steps:
                break
            x = x + model.drift_against(x, x, w) * grid.h + sq * gs.normals(k, n, model.dim)
        _check_finite(x)
        return out

    return _map_replicas(run, list(replicas), threads)


def _map_replicas(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return {r: fn(r) for r in items}
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as ex:
        results = list(ex.map(fn, items))
    return dict(zip(items, results))


# Law proxy -------------------------------------------------------------------

@dataclass
class LawProxy:
    """Stand-in for t -> phi_{s,t}(mu) on a grid.

    For models whose drift is affine in x2 only the mean path is needed (``atoms`` is
    None). Otherwise the full cloud is stored at every step. ``snapshots`` holds clouds
    at checkpoint steps when a cloud was simulated.
    """

    grid: TimeGrid
    means: np.ndarray
    atoms: np.ndarray | None = None
    weights: np.ndarray | None = None
    covs: np.ndarray | None = None
    snapshots: dict = field(default_factory=dict)
    exact: bool = False

    def drift(self, model: DriftModel, k: int, x: np.ndarray) -> np.ndarray:
        if self.atoms is None:
            return model.drift_mean(x, self.means[k])
        return model.drift_against(x, self.atoms[k], self.weights)

    def b1(self, model: DriftModel, k: int, x: np.ndarray) -> np.ndarray:
        if self.atoms is None:
            return model.b1_mean(x, self.means[k])
        return model.b1_against(x, self.atoms[k], self.weights)

    def b11(self, model: DriftModel, k: int, x: np.ndarray) -> np.ndarray:
        if self.atoms is None:
            return model.b11_mean(x, self.means[k])
        return model.b11_against(x, self.atoms[k], self.weights)

    def against(self, fn, k: int, x: np.ndarray) -> np.ndarray:
        """sum_j w_j fn(x_i, y_j) against the proxy at step k (needs stored atoms)."""
        if self.atoms is None:
            raise ValueError("this proxy stores moments only")
        out = None
        for lo in range(0, self.atoms.shape[1], 256):
            a = self.atoms[k, lo:lo + 256]
            val = fn(x[:, None, :], a[None, :, :])
            wv = self.weights[lo:lo + 256].reshape((1, -1) + (1,) * (val.ndim - 2))
            part = np.sum(val * wv, axis=1)
            out = part if out is None else out + part
        return out


def exact_linear_proxy(model: LinearDrift, mu0, grid: TimeGrid) -> LawProxy:
    """Closed-form mean path of phi_{s,t}(mu0) for the linear drift (all the drift needs)."""
    m0, _ = initial_moments(mu0, model.dim)
    A = model.B1 + model.B2
    means = np.array([expm((t - grid.s) * A) @ m0 for t in grid.times])
    return LawProxy(grid, means, exact=True)


def simulate_law_proxy(model: DriftModel, mu0, m_proxy: int, grid: TimeGrid, seed: int,
                       replica: int = 0, atoms0: np.ndarray | None = None,
                       weights: np.ndarray | None = None, store_atoms: bool | None = None) -> LawProxy:
    """Self-interacting M-particle cloud started from ``mu0`` (or from given weighted atoms)."""
    if atoms0 is None:
        if m_proxy < 1:
            raise ValueError("m_proxy must be >= 1")
        x = sample_initial(mu0, m_proxy, model.dim, StreamKey(seed, replica, stream=PROXY)).positions
    else:
        x = np.array(atoms0, float).reshape(-1, model.dim)
    M = x.shape[0]
    w = np.full(M, 1.0 / M) if weights is None else np.asarray(weights, float)
    if store_atoms is None:
        store_atoms = not model.affine_in_x2
    gs = GaussianStream(seed, replica, PROXY)
    sq = math.sqrt(grid.h)
    means = np.empty((grid.n_steps + 1, model.dim))
    atoms = np.empty((grid.n_steps + 1, M, model.dim)) if store_atoms else None
    want = set(grid.checkpoint_steps)
    snaps = {}
    for k in range(grid.n_steps + 1):
        means[k] = w @ x
        if atoms is not None:
            atoms[k] = x
        if k in want:
            snaps[k] = x.copy()
        if k == grid.n_steps:
            break
        x = x + model.drift_against(x, x, w) * grid.h + sq * gs.normals(k, M, model.dim)
    _check_finite(x, "proxy particle")
    return LawProxy(grid, means, atoms=atoms, weights=w, snapshots=snaps)


def make_proxy(model: DriftModel, mu0, grid: TimeGrid, seed: int, m_proxy: int = 4096,
               mode: str = "particle", replica: int = 0) -> LawProxy:
    if mode == "exact":
        if not isinstance(model, LinearDrift):
            raise ValueError("exact-moments mode is only available for the linear drift")
        return exact_linear_proxy(model, mu0, grid)
    if mode != "particle":
        raise ValueError(f"unknown mode {mode!r}")
    return simulate_law_proxy(model, mu0, m_proxy, grid, seed, replica)


# Flow driven by a proxy --------------------------------------------------------

@dataclass
class StepState:
    k: int
    x: np.ndarray
    jac: np.ndarray | None
    hess: np.ndarray | None
    dw: np.ndarray | None


def _step_factor(b1: np.ndarray, h: float, scheme: str) -> np.ndarray:
    d = b1.shape[-1]
    if scheme == "euler":
        return np.eye(d) + h * b1
    if scheme == "expm":
        if d == 1:
            return np.exp(h * b1)
        return expm(h * b1)
    raise ValueError(f"unknown tangent scheme {scheme!r}")


def flow_steps(model: DriftModel, proxy: LawProxy, x0: np.ndarray, seed: int, replica: int = 0,
               k0: int = 0, k1: int | None = None, tangent: str | None = None,
               second: bool = False, offset: int = 0, noise_scale: float = 1.0,
               stream: int = DYNAMICS, noise: np.ndarray | None = None) -> Iterator[StepState]:
    """Euler-Maruyama for M copies of X(x) driven by the proxy, optionally with tangents.

    Yields the state at t_k together with the increment used on [t_k, t_{k+1}]; the final
    state is yielded with ``dw=None``. Sample i uses particle index ``offset + i`` of the
    stream, so two calls with the same seed and offset share their noise.

    Tangent convention: jac[i, a, j] = d X^j / d x_a. ``tangent`` selects the per-step
    propagator: "euler" (I + b1 h, the exact derivative of the discrete map) or "expm".
    """
    grid = proxy.grid
    k1 = grid.n_steps if k1 is None else k1
    x = np.array(x0, float).reshape(-1, model.dim)
    M, d = x.shape
    gs = GaussianStream(seed, replica, stream)
    sq = math.sqrt(grid.h) * noise_scale
    J = np.broadcast_to(np.eye(d), (M, d, d)).copy() if tangent else None
    H = np.zeros((M, d, d, d)) if (tangent and second) else None
    for k in range(k0, k1):
        dw = sq * (gs.normals(k, M, d, offset) if noise is None else noise[k])
        yield StepState(k, x, J, H, dw)
        drift = proxy.drift(model, k, x)
        if tangent:
            b1 = proxy.b1(model, k, x)
            F = _step_factor(b1, grid.h, tangent)
            if d == 1:
                if H is not None:
                    H = H * F[:, :, :, None] + grid.h * (J * J)[..., None] * proxy.b11(model, k, x)
                J = J * F
            else:
                if H is not None:
                    b11 = proxy.b11(model, k, x)
                    H = (np.einsum("mabi,mij->mabj", H, F)
                         + grid.h * np.einsum("mai,mbk,mikj->mabj", J, J, b11))
                J = np.einsum("mai,mij->maj", J, F)
        x = x + drift * grid.h + dw
    _check_finite(x, "sample")
    yield StepState(k1, x, J, H, None)


@dataclass
class FlowSample:
    start_point: np.ndarray
    path: list
    law_proxy: LawProxy
    times: list


def simulate_nonlinear_flow(model: DriftModel, mu0, m_proxy: int, xs, grid: TimeGrid, seed: int,
                            mode: str = "particle", proxy: LawProxy | None = None) -> list[FlowSample]:
    """Paths X^mu_{s,.}(x) at the checkpoints for each start point, with their shared proxy."""
    proxy = proxy or make_proxy(model, mu0, grid, seed, m_proxy, mode)
    xs = np.asarray(xs, float).reshape(-1, model.dim)
    want = grid.checkpoint_steps
    snaps = {k: None for k in want}
    for st in flow_steps(model, proxy, xs, seed):
        if st.k in snaps:
            snaps[st.k] = st.x.copy()
    times = [grid.s + k * grid.h for k in want]
    return [FlowSample(xs[i], [snaps[k][i] for k in want], proxy, times) for i in range(xs.shape[0])]


# CSV ----------------------------------------------------------------------------

def write_snapshots_csv(path, rows, d: int, header_comment: str | None = None) -> None:
    """``rows`` yields (t, replica, positions[n, d]); columns t, replica, particle, x_0..x_{d-1}."""
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        wr = csv.writer(fh)
        wr.writerow(["t", "replica", "particle"] + [f"x_{j}" for j in range(d)])
        for t, r, pos in rows:
            for i, p in enumerate(np.asarray(pos).reshape(-1, d)):
                wr.writerow([repr(float(t)), r, i] + [repr(float(v)) for v in p])
