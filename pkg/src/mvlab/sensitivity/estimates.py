"""Estimate records shared by the sensitivity routines."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class DerivativeEstimate:
    value: np.ndarray | float
    stderr: np.ndarray | float
    route: str
    meta: dict = field(default_factory=dict)
    m: int = 0

    def __post_init__(self):
        if np.any(np.asarray(self.stderr) < 0):
            raise ValueError("stderr must be non-negative")

    def to_json(self) -> dict:
        def plain(v):
            a = np.asarray(v)
            return a.item() if a.ndim == 0 else a.tolist()
        return {"route": self.route, "value": plain(self.value), "stderr": plain(self.stderr),
                "m": int(self.m), "params": {k: plain(v) if isinstance(v, (np.ndarray, np.generic)) else v
                                            for k, v in self.meta.items()}}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


@dataclass
class BBKernel:
    value: np.ndarray
    stderr: np.ndarray
    m_samples: int


def batch_stats(vals: np.ndarray):
    """Sample mean and standard error along axis 0."""
    vals = np.asarray(vals, float)
    n = vals.shape[0]
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    return mean, se


def within(est: DerivativeEstimate, ref, k: float = 3.0, other: DerivativeEstimate | None = None) -> bool:
    """|est - ref| <= k * combined stderr (stderr of ``other`` is added in quadrature)."""
    se2 = np.asarray(est.stderr, float) ** 2
    if other is not None:
        se2 = se2 + np.asarray(other.stderr, float) ** 2
    diff = np.abs(np.asarray(est.value, float) - np.asarray(ref, float))
    return bool(np.all(diff <= k * np.sqrt(se2)))
