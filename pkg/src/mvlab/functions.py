"""Named test functions f on R^d with derivatives and Gaussian expectations.

id, cos, sigmoid and indicator (of x_1 > 0) act on the first coordinate; square is |x|^2. Gaussian
expectations are exact for id and square and use 96-node Gauss-Hermite
quadrature on the first-coordinate marginal otherwise (error far below 1e-12
for these entire or analytic-in-a-strip integrands at moderate variances).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import ndtr


@lru_cache(maxsize=4)
def _hermite(n: int = 96):
    z, w = np.polynomial.hermite_e.hermegauss(n)
    return z, w / np.sqrt(2 * np.pi)


def _sig(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(frozen=True)
class TestFunction:
    name: str
    f1: Callable     # scalar profile of the first coordinate (unused for square)
    df1: Callable
    d2f1: Callable
    bounded: bool
    first_only: bool = True

    __test__ = False  # not a pytest class

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if not self.first_only:
            return np.sum(x * x, axis=-1)
        return self.f1(x[..., 0])

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if not self.first_only:
            return 2 * x
        g = np.zeros_like(x)
        g[..., 0] = self.df1(x[..., 0])
        return g

    def hess(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        d = x.shape[-1]
        if not self.first_only:
            return np.broadcast_to(2 * np.eye(d), x.shape[:-1] + (d, d)).copy()
        H = np.zeros(x.shape[:-1] + (d, d))
        H[..., 0, 0] = self.d2f1(x[..., 0])
        return H

    def __call__(self, x):
        return self.value(x)

    # Gaussian expectations E f(X), E grad f(X), E hess f(X) for X ~ N(mean, cov)
    def _gh(self, fn, m0: float, v0: float) -> float:
        z, w = _hermite()
        return float(w @ fn(m0 + np.sqrt(max(v0, 0.0)) * z))

    def gauss_value(self, mean, cov) -> float:
        mean = np.atleast_1d(np.asarray(mean, float))
        cov = np.atleast_2d(np.asarray(cov, float))
        if not self.first_only:
            return float(mean @ mean + np.trace(cov))
        if self.name == "id":
            return float(mean[0])
        if self.name == "cos":
            return float(np.cos(mean[0]) * np.exp(-0.5 * cov[0, 0]))
        if self.name == "indicator":
            sd = np.sqrt(cov[0, 0])
            return float(ndtr(mean[0] / sd)) if sd > 0 else float(mean[0] > 0)
        return self._gh(self.f1, mean[0], cov[0, 0])

    def gauss_grad(self, mean, cov) -> np.ndarray:
        mean = np.atleast_1d(np.asarray(mean, float))
        cov = np.atleast_2d(np.asarray(cov, float))
        if not self.first_only:
            return 2 * mean
        g = np.zeros_like(mean)
        if self.name == "id":
            g[0] = 1.0
        elif self.name == "cos":
            g[0] = -np.sin(mean[0]) * np.exp(-0.5 * cov[0, 0])
        elif self.name == "indicator":
            # derivative of the Gaussian CDF; the pointwise gradient is zero a.e.
            sd = np.sqrt(cov[0, 0])
            g[0] = np.exp(-0.5 * (mean[0] / sd) ** 2) / (sd * np.sqrt(2 * np.pi)) if sd > 0 else 0.0
        else:
            g[0] = self._gh(self.df1, mean[0], cov[0, 0])
        return g

    def gauss_hess(self, mean, cov) -> np.ndarray:
        mean = np.atleast_1d(np.asarray(mean, float))
        cov = np.atleast_2d(np.asarray(cov, float))
        d = mean.shape[0]
        if not self.first_only:
            return 2 * np.eye(d)
        H = np.zeros((d, d))
        if self.name == "id":
            return H
        if self.name == "cos":
            H[0, 0] = -np.cos(mean[0]) * np.exp(-0.5 * cov[0, 0])
        else:
            H[0, 0] = self._gh(self.d2f1, mean[0], cov[0, 0])
        return H


FUNCTIONS: dict[str, TestFunction] = {
    "id": TestFunction("id", lambda u: u, np.ones_like, np.zeros_like, bounded=False),
    "square": TestFunction("square", None, None, None, bounded=False, first_only=False),
    "cos": TestFunction("cos", np.cos, lambda u: -np.sin(u), lambda u: -np.cos(u), bounded=True),
    "sigmoid": TestFunction(
        "sigmoid", _sig, lambda u: _sig(u) * (1 - _sig(u)),
        lambda u: _sig(u) * (1 - _sig(u)) * (1 - 2 * _sig(u)), bounded=True),
}
FUNCTIONS["indicator"] = TestFunction("indicator", lambda u: (np.asarray(u) > 0).astype(float),
                                       np.zeros_like, np.zeros_like, bounded=True)
FUNCTIONS["bounded-sigmoid"] = FUNCTIONS["sigmoid"]
FUNCTIONS["const"] = TestFunction("const", lambda u: np.ones_like(u, dtype=float), np.zeros_like,
                                  np.zeros_like, bounded=True)


def get_function(f) -> TestFunction:
    if isinstance(f, TestFunction):
        return f
    if f not in FUNCTIONS:
        raise ValueError(f"unknown test function {f!r}; known: {sorted(FUNCTIONS)}")
    return FUNCTIONS[f]


def constant(c: float) -> TestFunction:
    return TestFunction(f"const{c}", lambda u: np.full_like(u, c, dtype=float), np.zeros_like,
                        np.zeros_like, bounded=True)
