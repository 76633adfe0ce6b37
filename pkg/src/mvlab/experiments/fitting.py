"""Least-squares rate fits with 95% intervals from the residual variance."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import stdtrit


@dataclass
class RateFit:
    estimate: float
    ci95: tuple
    r2: float
    points: list = field(default_factory=list)
    intercept: float = float("nan")

    def __post_init__(self):
        lo, hi = self.ci95
        if not lo <= self.estimate <= hi:
            raise ValueError("ci95 must contain the estimate")
        if not 0.0 <= self.r2 <= 1.0:
            raise ValueError("r2 must lie in [0, 1]")

    def to_json(self) -> dict:
        return {"estimate": self.estimate, "ci95": list(self.ci95), "r2": self.r2,
                "intercept": self.intercept, "points": [list(p) for p in self.points]}


def _line_fit(x, y, pts, sign: float = 1.0) -> RateFit:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n = x.size
    if n < 3:
        raise ValueError(f"a rate fit needs at least 3 points, got {n}")
    if np.ptp(x) == 0:
        raise ValueError("abscissae must not all coincide")
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = np.sum((x - xm) * (y - ym)) / sxx
    icpt = ym - slope * xm
    res = y - (icpt + slope * x)
    sst = np.sum((y - ym) ** 2)
    ssr = np.sum(res ** 2)
    # a constant series is fitted perfectly by slope 0
    r2 = 1.0 if sst <= 1e-300 else float(min(1.0, max(0.0, 1.0 - ssr / sst)))
    se = np.sqrt(ssr / (n - 2) / sxx)
    half = float(stdtrit(n - 2, 0.975) * se)
    est = float(sign * slope)
    return RateFit(est, (est - half, est + half), r2, pts, float(icpt))


def _check_points(points):
    pts = [(float(a), float(b)) for a, b in points]
    v = np.array([b for _, b in pts])
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise ValueError("rate fits need strictly positive finite values")
    return pts


def fit_exponential_rate(points) -> RateFit:
    """Decay rate r of v ~ C e^{-r t}: least squares on (t, log v)."""
    pts = _check_points(points)
    t = [a for a, _ in pts]
    return _line_fit(t, np.log([b for _, b in pts]), pts, sign=-1.0)


def fit_loglog_slope(points) -> RateFit:
    """Slope of log v against log n."""
    pts = _check_points(points)
    if any(a <= 0 for a, _ in pts):
        raise ValueError("log-log fits need positive abscissae")
    return _line_fit(np.log([a for a, _ in pts]), np.log([b for _, b in pts]), pts)
