"""Interaction drifts b(x1, x2) and their derivatives.

Derivative arrays follow the gradient convention used throughout the package:
``b1[..., k, j] = d b^j / d x1_k`` (the transpose of the Jacobian), and
``b11[..., i1, i2, j] = d^2 b^j / d x1_i1 d x1_i2``. For a linear drift
``b = B1 x1 + B2 x2`` this gives ``b1 = B1'`` and ``b2 = B2'``.

All callables broadcast over leading axes: ``x1`` and ``x2`` have shape
``(..., d)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np


def _as2d(x: np.ndarray, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(-1, d) if d == 1 else x.reshape(1, d)
    return x


class DriftModel:
    """Base class. Subclasses provide ``b``, ``b1``, ``b2`` and the second derivatives.

    ``drift_against`` evaluates ``sum_j w_j b(x_i, y_j)``. The generic version
    is pairwise, O(N*M); models affine in ``x2`` override it with a mean closure.
    """

    dim: int = 1
    name: str = "drift"
    lipschitz_hint: float | None = None
    affine_in_x2: bool = False

    # pointwise callables
    def b(self, x1, x2):
        raise NotImplementedError

    def b1(self, x1, x2):
        raise NotImplementedError

    def b2(self, x1, x2):
        raise NotImplementedError

    def b11(self, x1, x2):
        raise NotImplementedError

    def b12(self, x1, x2):
        raise NotImplementedError

    def b22(self, x1, x2):
        raise NotImplementedError

    # integrated against a weighted cloud
    def _pairwise(self, fn, x, atoms, weights, chunk=256):
        x = np.asarray(x, float)
        atoms = np.asarray(atoms, float)
        w = np.asarray(weights, float)
        out = None
        for lo in range(0, atoms.shape[0], chunk):
            a = atoms[lo:lo + chunk]
            val = fn(x[:, None, :], a[None, :, :])
            wv = w[lo:lo + chunk].reshape((1, -1) + (1,) * (val.ndim - 2))
            part = np.sum(val * wv, axis=1)
            out = part if out is None else out + part
        return out

    def drift_against(self, x, atoms, weights):
        return self._pairwise(self.b, x, atoms, weights)

    def b1_against(self, x, atoms, weights):
        return self._pairwise(self.b1, x, atoms, weights)

    def b11_against(self, x, atoms, weights):
        return self._pairwise(self.b11, x, atoms, weights)

    def to_dict(self) -> dict:
        raise NotImplementedError


class LinearDrift(DriftModel):
    """b(x1, x2) = B1 x1 + B2 x2."""

    affine_in_x2 = True

    def __init__(self, B1, B2, name: str = "linear"):
        B1 = np.atleast_2d(np.asarray(B1, dtype=float))
        B2 = np.atleast_2d(np.asarray(B2, dtype=float))
        if B1.shape != B2.shape or B1.shape[0] != B1.shape[1]:
            raise ValueError(f"B1 {B1.shape} and B2 {B2.shape} must be equal square matrices")
        self.B1, self.B2 = B1, B2
        self.dim = B1.shape[0]
        self.name = name
        self.lipschitz_hint = float(np.linalg.norm(B1, 2) + np.linalg.norm(B2, 2))

    def b(self, x1, x2):
        return np.asarray(x1, float) @ self.B1.T + np.asarray(x2, float) @ self.B2.T

    def _const(self, M, x1, x2):
        shape = np.broadcast_shapes(np.shape(x1)[:-1], np.shape(x2)[:-1])
        return np.broadcast_to(M, shape + M.shape)

    def b1(self, x1, x2):
        return self._const(self.B1.T, x1, x2)

    def b2(self, x1, x2):
        return self._const(self.B2.T, x1, x2)

    def _zero3(self, x1, x2):
        d = self.dim
        return self._const(np.zeros((d, d, d)), x1, x2)

    b11 = b12 = b22 = _zero3

    def drift_against(self, x, atoms, weights):
        mean = np.asarray(weights, float) @ np.asarray(atoms, float)
        return self.drift_mean(x, mean)

    def drift_mean(self, x, mean):
        return np.asarray(x, float) @ self.B1.T + mean @ self.B2.T

    def b1_against(self, x, atoms, weights):
        return self.b1(np.asarray(x, float), np.zeros((1, self.dim)))

    def b1_mean(self, x, mean):
        return self.b1(np.asarray(x, float), np.asarray(mean)[None])

    def b11_against(self, x, atoms, weights):
        return self._zero3(np.asarray(x, float), np.zeros((1, self.dim)))

    def b11_mean(self, x, mean):
        return self._zero3(np.asarray(x, float), np.asarray(mean)[None])

    def to_dict(self) -> dict:
        return {"kind": "linear", "B1": self.B1.tolist(), "B2": self.B2.tolist()}


# Potentials for the gradient-type drift -----------------------------------

@dataclass
class Potential:
    """Scalar potential with gradient, Hessian and third derivative callables."""

    name: str
    grad: Callable
    hess: Callable
    third: Callable
    params: dict = field(default_factory=dict)
    hess_bounds: tuple[float, float] | None = None  # eigenvalue range of the Hessian
    even: bool = True
    quadratic: bool = False


def _eye_like(x):
    d = x.shape[-1]
    return np.broadcast_to(np.eye(d), x.shape[:-1] + (d, d))


def quadratic_potential(alpha: float = 1.0) -> Potential:
    a = float(alpha)
    return Potential(
        "quadratic",
        grad=lambda x: a * np.asarray(x, float),
        hess=lambda x: a * _eye_like(np.asarray(x, float)),
        third=lambda x: np.zeros(np.shape(x) + (np.shape(x)[-1],) * 2),
        params={"alpha": a}, hess_bounds=(a, a), quadratic=True,
    )


def quadratic_cos_potential(alpha: float = 1.0, gamma: float = 0.3) -> Potential:
    """alpha |x|^2 / 2 + gamma sum_k (1 - cos x_k)."""
    a, g = float(alpha), float(gamma)

    def hess(x):
        x = np.asarray(x, float)
        return a * _eye_like(x) + g * np.cos(x)[..., :, None] * _eye_like(x)

    def third(x):
        x = np.asarray(x, float)
        d = x.shape[-1]
        idx = np.arange(d)
        out = np.zeros(x.shape + (d, d))
        out[..., idx, idx, idx] = -g * np.sin(x)
        return out

    return Potential(
        "quadratic_cos",
        grad=lambda x: a * np.asarray(x, float) + g * np.sin(x),
        hess=hess, third=third, params={"alpha": a, "gamma": g},
        hess_bounds=(a - abs(g), a + abs(g)), even=True,
    )


def gaussian_bump_potential(beta: float = 0.5, width: float = 1.0) -> Potential:
    """beta w^2 (1 - exp(-|x|^2 / 2w^2)): bounded, quadratic near the origin."""
    bt, w = float(beta), float(width)
    w2 = w * w

    def g(x):
        return np.exp(-np.sum(x * x, axis=-1) / (2 * w2))

    def grad(x):
        x = np.asarray(x, float)
        return bt * x * g(x)[..., None]

    def hess(x):
        x = np.asarray(x, float)
        gx = g(x)[..., None, None]
        return bt * gx * (_eye_like(x) - x[..., :, None] * x[..., None, :] / w2)

    def third(x):
        x = np.asarray(x, float)
        d = x.shape[-1]
        gx = g(x)[..., None, None, None]
        I = np.eye(d)
        xi = x[..., :, None, None]
        xj = x[..., None, :, None]
        xk = x[..., None, None, :]
        t1 = -xk * (I[:, :, None] - xi * xj / w2) / w2
        t2 = -(I[:, None, :] * xj + I[None, :, :] * xi) / w2
        # index order (i, j, k) is symmetric in all slots
        return bt * gx * (t1 + t2)

    # Hessian eigenvalues lie in [beta * min_r (1 - r^2) e^{-r^2/2}, beta] = [-2 beta e^{-3/2}, beta]
    return Potential(
        "gaussian", grad=grad, hess=hess, third=third,
        params={"beta": bt, "width": w}, hess_bounds=(-2 * bt * np.exp(-1.5), bt),
    )


POTENTIALS: dict[str, Callable[..., Potential]] = {
    "quadratic": quadratic_potential,
    "quadratic_cos": quadratic_cos_potential,
    "gaussian": gaussian_bump_potential,
}


class LangevinDrift(DriftModel):
    """b(x1, x2) = -grad U(x1) - grad V(x1 - x2) with an even interaction V."""

    def __init__(self, U: Potential, V: Potential, dim: int = 1, name: str = "langevin"):
        if not V.even:
            raise ValueError("interaction potential V must be even")
        self.U, self.V = U, V
        self.dim = int(dim)
        self.name = name
        self.affine_in_x2 = V.quadratic
        hu = U.hess_bounds or (np.nan, np.nan)
        hv = V.hess_bounds or (np.nan, np.nan)
        self.lipschitz_hint = float(max(abs(hu[0]), abs(hu[1])) + 2 * max(abs(hv[0]), abs(hv[1])))
        self.parity = "even"

    @property
    def gradU(self):
        return self.U.grad

    @property
    def hessU(self):
        return self.U.hess

    @property
    def gradV(self):
        return self.V.grad

    @property
    def hessV(self):
        return self.V.hess

    def b(self, x1, x2):
        x1 = np.asarray(x1, float)
        return -self.U.grad(x1) - self.V.grad(x1 - np.asarray(x2, float))

    def b1(self, x1, x2):
        x1 = np.asarray(x1, float)
        return -self.U.hess(x1) - self.V.hess(x1 - np.asarray(x2, float))

    def b2(self, x1, x2):
        return self.V.hess(np.asarray(x1, float) - np.asarray(x2, float))

    def b11(self, x1, x2):
        x1 = np.asarray(x1, float)
        return -self.U.third(x1) - self.V.third(x1 - np.asarray(x2, float))

    def b12(self, x1, x2):
        return self.V.third(np.asarray(x1, float) - np.asarray(x2, float))

    def b22(self, x1, x2):
        return -self.V.third(np.asarray(x1, float) - np.asarray(x2, float))

    # mean closure when V is quadratic: grad V(x - y) = beta (x - y)
    def drift_mean(self, x, mean):
        beta = self.V.params["alpha"]
        x = np.asarray(x, float)
        return -self.U.grad(x) - beta * (x - mean)

    def b1_mean(self, x, mean):
        beta = self.V.params["alpha"]
        x = np.asarray(x, float)
        return -self.U.hess(x) - beta * _eye_like(x)

    def b11_mean(self, x, mean):
        return -self.U.third(np.asarray(x, float))

    def drift_against(self, x, atoms, weights):
        if self.affine_in_x2:
            return self.drift_mean(x, np.asarray(weights, float) @ np.asarray(atoms, float))
        return self._pairwise(self.b, x, atoms, weights)

    def b1_against(self, x, atoms, weights):
        if self.affine_in_x2:
            return self.b1_mean(x, None)
        return self._pairwise(self.b1, x, atoms, weights)

    def b11_against(self, x, atoms, weights):
        if self.affine_in_x2:
            return self.b11_mean(x, None)
        return self._pairwise(self.b11, x, atoms, weights)

    def to_dict(self) -> dict:
        out = {"kind": "langevin", "dim": self.dim, "U": self.U.name, "V": self.V.name}
        out["U_params"] = dict(self.U.params)
        out["V_params"] = dict(self.V.params)
        return out


# Registry ------------------------------------------------------------------

_REGISTRY: dict[str, Callable[[dict], DriftModel]] = {}


def register_model(kind: str, factory: Callable[[dict], DriftModel]) -> None:
    """Make ``{"kind": kind, ...}`` loadable; the factory receives the whole dict."""
    _REGISTRY[kind] = factory


def registered_kinds() -> list[str]:
    return sorted(_REGISTRY)


def _linear_from_dict(spec: dict) -> LinearDrift:
    d = int(spec.get("dim", 1))
    B1 = np.asarray(spec["B1"], float)
    B2 = np.asarray(spec["B2"], float)
    if B1.ndim == 0:
        B1 = B1 * np.eye(d)
    if B2.ndim == 0:
        B2 = B2 * np.eye(d)
    return LinearDrift(B1, B2)


def _potential_from(spec: dict, which: str, default_scale: str) -> Potential:
    name = spec[which]
    if name not in POTENTIALS:
        raise ValueError(f"unknown potential {which}={name!r}; known: {sorted(POTENTIALS)}")
    params = dict(spec.get(f"{which}_params", {}))
    if not params:
        # flat form: {"U": "quadratic", "alpha": 1.0, "V": "quadratic", "beta": 0.5}
        if name in ("quadratic", "quadratic_cos") and default_scale in spec:
            params["alpha"] = spec[default_scale]
        if name == "quadratic_cos" and f"{which}_gamma" in spec:
            params["gamma"] = spec[f"{which}_gamma"]
        if name == "gaussian":
            if default_scale in spec:
                params["beta"] = spec[default_scale]
            if "width" in spec:
                params["width"] = spec["width"]
    return POTENTIALS[name](**params)


def _langevin_from_dict(spec: dict) -> LangevinDrift:
    U = _potential_from(spec, "U", "alpha")
    V = _potential_from(spec, "V", "beta")
    return LangevinDrift(U, V, dim=int(spec.get("dim", 1)))


register_model("linear", _linear_from_dict)
register_model("langevin", _langevin_from_dict)


def model_from_dict(spec: dict) -> DriftModel:
    kind = spec.get("kind")
    if kind not in _REGISTRY:
        raise ValueError(f"unknown model kind {kind!r}; registered: {registered_kinds()}")
    return _REGISTRY[kind](spec)


def load_model(src) -> DriftModel:
    """Load from a dict, a JSON string, or a path to a JSON file."""
    if isinstance(src, DriftModel):
        return src
    if isinstance(src, dict):
        return model_from_dict(src)
    text = str(src)
    p = Path(text)
    if not text.lstrip().startswith("{") and p.exists():
        text = p.read_text()
    return model_from_dict(json.loads(text))


# Evaluation helpers ----------------------------------------------------------

def eval_mean_drift(model: DriftModel, x, mu) -> np.ndarray:
    """b(x, mu) = int b(x, y) mu(dy) for an EmpiricalMeasure ``mu``.

    ``x`` of shape (d,) returns (d,); shape (n, d) returns (n, d).
    """
    x = np.asarray(x, float)
    single = x.ndim == 1
    xs = x.reshape(1, -1) if single else x
    atoms = np.asarray(mu.atoms, float).reshape(-1, model.dim)
    out = model.drift_against(xs, atoms, np.asarray(mu.weights, float))
    return out[0] if single else out


def assemble_A(model: DriftModel, x1, x2) -> np.ndarray:
    """The 2d x 2d matrix [[b1(x1,x2), b2(x2,x1)], [b2(x1,x2), b1(x2,x1)]]."""
    x1 = np.asarray(x1, float)
    x2 = np.asarray(x2, float)
    top = np.concatenate([model.b1(x1, x2), model.b2(x2, x1)], axis=-1)
    bot = np.concatenate([model.b2(x1, x2), model.b1(x2, x1)], axis=-1)
    return np.concatenate([top, bot], axis=-2)
