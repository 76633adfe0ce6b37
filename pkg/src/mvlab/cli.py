"""Command line: ``mvlab <subcommand> --config PATH [--seed S] [--out DIR] [--threads K] [--mode M]``.

Exit codes: 0 success (all configured criteria met), 1 criterion failure, 2 input error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
import time
import warnings
from dataclasses import asdict, dataclass, field

from . import __version__
from .catalog.models import load_model
from .catalog.spectral import spectral_scan
from .engine.core import TimeGrid, particle_system_replicas, simulate_nonlinear_flow, write_snapshots_csv
from .experiments import RUNNERS, ConfigError, validate_config

SUBCOMMANDS = {"check-h": "check_h", "simulate": "simulate", "contraction": "contraction", "chaos": "chaos",
               "taylor": "taylor", "bel-validate": "bel_validation"}
EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


@dataclass
class RunManifest:
    config_sha256: str                 # of the config bytes as read
    normalized_config_sha256: str
    seed: int
    version: str
    started: float
    finished: float
    outputs: list = field(default_factory=list)
    subcommand: str = ""
    passed: bool | None = None

    def write(self, out_dir: str) -> str:
        """Atomic write: temp file in the same directory, then rename."""
        path = os.path.join(out_dir, "manifest.json")
        fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=".manifest-", suffix=".json")
        with os.fdopen(fd, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
        return path


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mvlab", description="McKean-Vlasov numerical laboratory")
    sub = p.add_subparsers(dest="cmd", metavar="SUBCOMMAND")
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON config (a model document suffices for check-h)")
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        sp.add_argument("--out", default=None, help="output directory (default: the config's out)")
        sp.add_argument("--threads", type=int, default=None, help="worker threads (fallback: MVLAB_THREADS)")
        sp.add_argument("--mode", choices=["exact", "particle"], default=None)
    return p


def _threads(arg) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("MVLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError(f"MVLAB_THREADS must be an integer, got {env!r}") from None
    return 1


def _read(path):
    if not os.path.isfile(path):
        raise InputError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        return raw, json.loads(raw)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON ({exc})") from None


def _config_for(cmd, doc, args):
    if cmd == "check_h" and "model" not in doc:
        doc = {"model": doc}
    doc = dict(doc)
    doc.setdefault("experiment", cmd)
    if doc["experiment"] != cmd:
        raise InputError(f"config is for {doc['experiment']!r}, not for {cmd!r}")
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.mode is not None:
        doc["mode"] = args.mode
    return validate_config(doc)


def _check_h(cfg, out_dir):
    model = load_model(cfg.model)
    box = cfg.params.get("box", [-5.0, 5.0])
    rep = spectral_scan(model, box=box, n_probes=int(cfg.params.get("n_probes", 512)), seed=cfg.seed)
    print(f"lambda0={rep.lambda0:.12g} lambda1={rep.lambda1:.12g} lambda12={rep.lambda12:.12g} "
          f"lambda12_hat={rep.lambda12_hat:.12g} b2_norm={rep.b2_norm:.12g} h_satisfied={rep.h_satisfied}")
    path = os.path.join(out_dir, "check_h.json")
    with open(path, "w") as fh:
        json.dump({"config_hash": cfg.hash(), **rep.to_dict()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return rep.h_satisfied, [path]


def _simulate(cfg, out_dir, threads):
    model = load_model(cfg.model)
    g = cfg.grid
    grid = TimeGrid(g.s, g.t_end, g.dt, g.checkpoints)
    times = [grid.s + k * grid.h for k in grid.checkpoint_steps]
    what = cfg.params.get("what", "particles")
    path = os.path.join(out_dir, f"simulate_{what}.csv")
    head = f"experiment=simulate what={what} config_sha256={cfg.hash()}"
    if what == "particles":
        n = int(cfg.params.get("n_particles", cfg.n_ladder[-1] if cfg.n_ladder else 1000))
        res = particle_system_replicas(model, cfg.mu0, n, grid, cfg.seed, range(cfg.replicas), threads=threads)
        rows = ((t, r, snaps[i]) for r, snaps in sorted(res.items()) for i, t in enumerate(times))
    elif what == "flow":
        xs = cfg.params.get("start_points", [[0.0] * model.dim])
        flows = simulate_nonlinear_flow(model, cfg.mu0, int(cfg.params.get("m_proxy", 4096)), xs, grid,
                                        cfg.seed, mode=cfg.mode)
        rows = ((t, i, fl.path[j]) for i, fl in enumerate(flows) for j, t in enumerate(fl.times))
    else:
        raise InputError(f"params.what must be 'particles' or 'flow', got {what!r}")
    write_snapshots_csv(path, rows, model.dim, head)
    return True, [path]


def dispatch(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    if args.cmd is None:
        parser.print_usage(sys.stderr)
        return EXIT_INPUT
    cmd = SUBCOMMANDS[args.cmd]
    started = time.time()
    try:
        raw, doc = _read(args.config)
        cfg = _config_for(cmd, doc, args)
        threads = _threads(args.threads)
        out_dir = os.path.abspath(args.out or cfg.out)
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "config.normalized.json"), "w") as fh:
            fh.write(cfg.dumps())
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            if cmd == "check_h":
                passed, outputs = _check_h(cfg, out_dir)
            elif cmd == "simulate":
                passed, outputs = _simulate(cfg, out_dir, threads)
            else:
                result = RUNNERS[cmd](cfg, threads=threads)
                outputs = result.write(out_dir)
                passed = result.passed
                for k, v in result.checks.items():
                    print(f"{k}: {'pass' if v else 'FAIL'}")
    except (InputError, ConfigError) as exc:
        print(f"mvlab {args.cmd}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, KeyError, TypeError) as exc:
        print(f"mvlab {args.cmd}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FloatingPointError as exc:
        print(f"mvlab {args.cmd}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    outputs = [os.path.join(out_dir, "config.normalized.json")] + outputs
    man = RunManifest(hashlib.sha256(raw).hexdigest(), cfg.hash(), cfg.seed, __version__, started, time.time(),
                      outputs, args.cmd, bool(passed))
    man.write(out_dir)
    return EXIT_OK if passed else EXIT_FAIL


def main(argv=None) -> None:
    sys.exit(dispatch(argv))


if __name__ == "__main__":
    main()
