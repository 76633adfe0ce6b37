import hashlib
import json
import os
import subprocess
import sys

import pytest

from mvlab.cli import dispatch

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")


def _write(tmp_path, doc, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_check_h_pass(tmp_path, capsys):
    out = tmp_path / "out"
    assert dispatch(["check-h", "--config", os.path.join(CONFIGS, "linear.json"), "--out", str(out)]) == 0
    line = capsys.readouterr().out
    assert "lambda1=1 " in line and "lambda12=0.5 " in line and "h_satisfied=True" in line
    man = json.load(open(out / "manifest.json"))
    assert man["passed"] and man["subcommand"] == "check-h"
    assert set(os.listdir(out)) == {"manifest.json", "check_h.json", "config.normalized.json"}


def test_check_h_fail_exit_code(tmp_path):
    cfg = os.path.join(CONFIGS, "linear_unstable.json")
    assert dispatch(["check-h", "--config", cfg, "--out", str(tmp_path)]) == 1


@pytest.mark.parametrize("argv", [["check-h", "--config", "/nonexistent.json"], ["bogus"], [],
                                  ["check-h"], ["check-h", "--config", "x", "--mode", "fast"]])
def test_input_errors_exit_two(argv):
    assert dispatch(argv) == 2


def test_bad_json_and_bad_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert dispatch(["taylor", "--config", str(bad), "--out", str(tmp_path)]) == 2
    cfg = _write(tmp_path, {"experiment": "chaos", "model": {"kind": "linear", "B1": [[-1]], "B2": [[0]]},
                            "n_ladder": [20, 10]})
    assert dispatch(["chaos", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


def test_subcommand_must_match_config(tmp_path):
    cfg = os.path.join(CONFIGS, "taylor_linear.json")
    assert dispatch(["chaos", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_manifest_hashes_and_seed_override(tmp_path):
    doc = {"experiment": "taylor", "model": {"kind": "linear", "B1": [[-1.0]], "B2": [[0.5]]}, "mode": "exact",
           "grid": {"t_end": 1.0, "dt": 1e-2}, "functions": ["cos"], "params": {"flow": False}}
    cfg = _write(tmp_path, doc)
    out = tmp_path / "out"
    assert dispatch(["taylor", "--config", cfg, "--out", str(out), "--seed", "7"]) == 0
    man = json.load(open(out / "manifest.json"))
    assert man["config_sha256"] == hashlib.sha256(open(cfg, "rb").read()).hexdigest()
    norm = (out / "config.normalized.json").read_bytes()
    assert man["normalized_config_sha256"] == hashlib.sha256(norm).hexdigest()
    assert man["seed"] == 7 and json.loads(norm)["seed"] == 7
    assert all(os.path.dirname(p) == str(out) for p in man["outputs"])
    header = open(out / "taylor.csv").readline()
    assert man["normalized_config_sha256"] in header


def test_threads_env_fallback(tmp_path, monkeypatch):
    cfg = os.path.join(CONFIGS, "simulate.json")
    monkeypatch.setenv("MVLAB_THREADS", "2")
    assert dispatch(["simulate", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    monkeypatch.setenv("MVLAB_THREADS", "many")
    assert dispatch(["simulate", "--config", cfg, "--out", str(tmp_path / "b")]) == 2


def test_simulate_is_thread_independent(tmp_path):
    cfg = os.path.join(CONFIGS, "simulate.json")
    dispatch(["simulate", "--config", cfg, "--out", str(tmp_path / "a"), "--threads", "1"])
    dispatch(["simulate", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "2"])
    a = (tmp_path / "a" / "simulate_particles.csv").read_bytes()
    assert a == (tmp_path / "b" / "simulate_particles.csv").read_bytes() and len(a) > 0


def test_writes_only_inside_out(tmp_path):
    cwd = tmp_path / "cwd"
    cwd.mkdir()
    out = tmp_path / "out"
    r = subprocess.run([sys.executable, "-m", "mvlab.cli", "check-h", "--config",
                        os.path.join(CONFIGS, "linear.json"), "--out", str(out)], cwd=cwd,
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert os.listdir(cwd) == [] and (out / "manifest.json").exists()
