"""Experiment configuration: validation, defaults and a canonical serialization."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..catalog.models import load_model
from ..engine.core import DEFAULT_DT, initial_moments
from ..functions import FUNCTIONS

EXPERIMENTS = ("check_h", "simulate", "contraction", "chaos", "taylor", "bel_validation")
MODES = ("exact", "particle")
MIN_STDERR_REPLICAS = 8


class ConfigError(ValueError):
    """Rejected configuration; ``problems`` lists (field, message) for every violation."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid config: " + "; ".join(f"{k}: {m}" for k, m in self.problems))


@dataclass
class GridSpec:
    s: float = 0.0
    t_end: float = 1.0
    dt: float = DEFAULT_DT
    checkpoints: list = field(default_factory=list)


@dataclass
class ExperimentConfig:
    experiment: str
    model: dict
    mu0: dict
    mu1: dict | None = None
    grid: GridSpec = field(default_factory=GridSpec)
    n_ladder: list = field(default_factory=list)
    replicas: int = 8
    seed: int = 0
    functions: list = field(default_factory=lambda: ["id"])
    out: str = "results"
    mode: str = "particle"
    criteria: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return canonical_json(self.to_dict())

    def hash(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()

    def stderr_criteria(self) -> list:
        return sorted(k for k in self.criteria if k.endswith("stderr"))


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _num(v, name, problems, kind=float, positive=False, minimum=None):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        problems.append((name, f"expected a number, got {v!r}"))
        return None
    if kind is int:
        if float(v) != int(v):
            problems.append((name, f"expected an integer, got {v!r}"))
            return None
        v = int(v)
    else:
        v = float(v)
        if not np.isfinite(v):
            problems.append((name, "must be finite"))
            return None
    if positive and not v > 0:
        problems.append((name, "must be positive"))
    if minimum is not None and v < minimum:
        problems.append((name, f"must be >= {minimum}"))
    return v


def _measure(spec, name, d, problems):
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        spec = {"kind": "dirac", "x": float(spec)}
    if not isinstance(spec, dict):
        problems.append((name, "expected an initial-law object"))
        return None
    try:
        initial_moments(spec, d)
    except (KeyError, ValueError, TypeError) as exc:
        problems.append((name, f"{type(exc).__name__}: {exc}"))
        return None
    if spec.get("kind") == "gaussian":
        _, C = initial_moments(spec, d)
        if np.linalg.eigvalsh(0.5 * (C + C.T))[0] < -1e-12:
            problems.append((name, "covariance is not positive semi-definite"))
    return json.loads(json.dumps(spec))


def validate_config(doc) -> ExperimentConfig:
    """Fill defaults and enforce every invariant; all violations are reported together."""
    if isinstance(doc, ExperimentConfig):
        doc = doc.to_dict()
    if not isinstance(doc, dict):
        raise ConfigError([("<root>", "expected a JSON object")])
    problems = []
    known = set(ExperimentConfig.__dataclass_fields__)
    for k in sorted(set(doc) - known):
        problems.append((k, "unknown field"))

    exp = doc.get("experiment")
    if exp not in EXPERIMENTS:
        problems.append(("experiment", f"must be one of {list(EXPERIMENTS)}, got {exp!r}"))

    model_doc = doc.get("model")
    d = 1
    if model_doc is None:
        problems.append(("model", "missing"))
    else:
        try:
            model = load_model(model_doc)
            d = model.dim
            model_doc = json.loads(json.dumps(model_doc)) if isinstance(model_doc, dict) else model.to_dict()
        except Exception as exc:  # model factories raise a variety of errors
            problems.append(("model", f"{type(exc).__name__}: {exc}"))

    mu0 = _measure(doc.get("mu0", {"kind": "dirac", "x": 0.0}), "mu0", d, problems)
    mu1 = doc.get("mu1")
    if mu1 is not None:
        mu1 = _measure(mu1, "mu1", d, problems)
    if exp == "contraction" and mu1 is None:
        problems.append(("mu1", "contraction needs a second initial law"))

    g = doc.get("grid", {}) or {}
    if not isinstance(g, dict):
        problems.append(("grid", "expected an object"))
        g = {}
    for k in sorted(set(g) - set(GridSpec.__dataclass_fields__)):
        problems.append((f"grid.{k}", "unknown field"))
    s = _num(g.get("s", 0.0), "grid.s", problems)
    t_end = _num(g.get("t_end", 1.0), "grid.t_end", problems)
    dt = _num(g.get("dt", DEFAULT_DT), "grid.dt", problems, positive=True)
    cps = g.get("checkpoints", [])
    if not isinstance(cps, list):
        problems.append(("grid.checkpoints", "expected a list"))
        cps = []
    cps = [_num(c, "grid.checkpoints", problems) for c in cps]
    if s is not None and t_end is not None:
        if t_end < s:
            problems.append(("grid.t_end", "must be >= grid.s"))
        for c in cps:
            if c is not None and not s - 1e-12 <= c <= t_end + 1e-12:
                problems.append(("grid.checkpoints", f"{c} outside [{s}, {t_end}]"))
        if all(c is not None for c in cps) and cps != sorted(cps):
            problems.append(("grid.checkpoints", "must be sorted"))

    ladder = doc.get("n_ladder", [])
    if not isinstance(ladder, list):
        problems.append(("n_ladder", "expected a list"))
        ladder = []
    ladder = [_num(n, "n_ladder", problems, kind=int, minimum=1) for n in ladder]
    if all(n is not None for n in ladder) and any(b <= a for a, b in zip(ladder, ladder[1:])):
        problems.append(("n_ladder", "must be strictly increasing"))
    if exp == "chaos" and not ladder:
        problems.append(("n_ladder", "chaos needs at least one particle count"))

    replicas = _num(doc.get("replicas", 8), "replicas", problems, kind=int, minimum=1)
    seed = _num(doc.get("seed", 0), "seed", problems, kind=int, minimum=0)
    if seed is not None and seed >= 2**64:
        problems.append(("seed", "must fit in 64 bits"))

    fns = doc.get("functions", ["id"])
    if not isinstance(fns, list) or not fns:
        problems.append(("functions", "expected a non-empty list of names"))
        fns = []
    for f in fns:
        if f not in FUNCTIONS:
            problems.append(("functions", f"unknown test function {f!r}; known: {sorted(FUNCTIONS)}"))

    out = doc.get("out", "results")
    if not isinstance(out, str) or not out:
        problems.append(("out", "expected a directory name"))

    mode = doc.get("mode", "particle")
    if mode not in MODES:
        problems.append(("mode", f"must be one of {list(MODES)}"))

    criteria = doc.get("criteria", {}) or {}
    params = doc.get("params", {}) or {}
    for name, val in (("criteria", criteria), ("params", params)):
        if not isinstance(val, dict):
            problems.append((name, "expected an object"))
    if isinstance(criteria, dict) and replicas is not None:
        for k in sorted(criteria):
            if k.endswith("stderr") and replicas < MIN_STDERR_REPLICAS:
                problems.append(("replicas", f"stderr-based criterion {k!r} needs replicas >= "
                                             f"{MIN_STDERR_REPLICAS}, got {replicas}"))
    try:
        criteria = json.loads(json.dumps(criteria, allow_nan=False))
        params = json.loads(json.dumps(params, allow_nan=False))
    except (TypeError, ValueError) as exc:
        problems.append(("criteria/params", f"not JSON-serializable: {exc}"))

    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(exp, model_doc, mu0, mu1, GridSpec(s, t_end, dt, cps), ladder, replicas,
                            seed, list(fns), out, mode, criteria, params)


def load_config(path) -> tuple[ExperimentConfig, bytes]:
    """Read and validate a JSON config; returns the config and the raw bytes read."""
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError([("<file>", f"{path}: not valid JSON ({exc})")]) from None
    return validate_config(doc), raw
