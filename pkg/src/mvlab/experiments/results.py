"""Result container and writers shared by the experiments."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .fitting import RateFit


@dataclass
class ExperimentResult:
    name: str
    columns: list
    rows: list                       # list of dicts keyed by ``columns``
    fits: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    config_hash: str = ""

    @property
    def passed(self) -> bool:
        return all(bool(v) for v in self.checks.values())

    def column(self, name, **where):
        return [r[name] for r in self.rows if all(r.get(k) == v for k, v in where.items())]

    def to_json(self) -> dict:
        return {"experiment": self.name, "config_hash": self.config_hash, "passed": self.passed,
                "checks": {k: bool(v) for k, v in self.checks.items()},
                "fits": {k: (v.to_json() if isinstance(v, RateFit) else v) for k, v in self.fits.items()},
                "summary": _plain(self.summary)}

    def write(self, out_dir) -> list[str]:
        """CSV table plus JSON summary; both carry the config hash."""
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, f"{self.name}.csv")
        json_path = os.path.join(out_dir, f"{self.name}.json")
        with open(csv_path, "w", newline="") as fh:
            fh.write(f"# experiment={self.name} config_sha256={self.config_hash}\n")
            w = csv.DictWriter(fh, fieldnames=self.columns, extrasaction="ignore")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: _cell(r.get(k)) for k in self.columns})
        with open(json_path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return [csv_path, json_path]


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, RateFit):
        return v.to_json()
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def try_fit(fn, points):
    """Fit or return the refusal reason (e.g. fewer than 3 points, nonpositive values)."""
    try:
        return fn(points), None
    except ValueError as exc:
        return None, str(exc)
