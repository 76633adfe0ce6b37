import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvlab.experiments import (ConfigError, RateFit, fit_exponential_rate, fit_loglog_slope, load_config,
                               run_chaos, run_contraction, run_taylor, validate_config)
from mvlab.experiments.contraction import gaussian_w1, gaussian_w2

LIN = {"kind": "linear", "B1": [[-1.0]], "B2": [[0.5]]}


def _cfg(**kw):
    doc = {"experiment": "contraction", "model": LIN, "mu0": {"kind": "dirac", "x": 0.0},
           "mu1": {"kind": "dirac", "x": 1.0}, "mode": "exact", "grid": {"t_end": 4.0}}
    doc.update(kw)
    return validate_config(doc)


# fitting

def test_exponential_rate_recovers_synthetic_rate():
    rng = np.random.default_rng(3)
    t = np.linspace(0, 4, 9)
    v = 2.0 * np.exp(-1.3 * t) * np.exp(0.01 * rng.standard_normal(t.size))
    fit = fit_exponential_rate(zip(t, v))
    assert fit.ci95[0] <= 1.3 <= fit.ci95[1]
    assert abs(fit.estimate - 1.3) < 0.02 and fit.r2 > 0.999


def test_loglog_slope_recovers_synthetic_slope():
    rng = np.random.default_rng(4)
    n = np.array([50, 100, 200, 400, 800])
    v = 3.0 * n ** -0.8 * np.exp(0.01 * rng.standard_normal(n.size))
    fit = fit_loglog_slope(zip(n, v))
    assert fit.ci95[0] <= -0.8 <= fit.ci95[1]


def test_exact_power_law_has_zero_width_interval():
    fit = fit_loglog_slope([(n, n ** -0.5) for n in (10, 20, 40)])
    assert fit.estimate == pytest.approx(-0.5) and fit.ci95[1] - fit.ci95[0] < 1e-9 and fit.r2 == 1.0


def test_fit_refusals():
    with pytest.raises(ValueError):
        fit_loglog_slope([(1, 1.0), (2, 0.5)])
    with pytest.raises(ValueError):
        fit_loglog_slope([(1, 1.0), (2, 0.0), (3, 0.1)])
    with pytest.raises(ValueError):
        fit_exponential_rate([(1, 1.0), (1, 0.5), (1, 0.2)])


@given(st.lists(st.floats(1e-6, 1e6), min_size=3, max_size=8))
def test_fit_invariants(vals):
    fit = fit_exponential_rate(list(enumerate(vals)))
    assert fit.ci95[0] <= fit.estimate <= fit.ci95[1]
    assert 0.0 <= fit.r2 <= 1.0


def test_ratefit_validates():
    with pytest.raises(ValueError):
        RateFit(1.0, (1.5, 2.0), 0.5)
    with pytest.raises(ValueError):
        RateFit(1.0, (0.5, 2.0), 1.5)


# config

def test_config_round_trip_is_byte_identical(tmp_path):
    cfg = _cfg(params={"n_probes": 64}, criteria={"w2_rate": 0.5})
    p = tmp_path / "c.json"
    p.write_text(cfg.dumps())
    again, raw = load_config(str(p))
    assert again.dumps() == cfg.dumps() and again.hash() == cfg.hash()
    assert validate_config(json.loads(again.dumps())).dumps().encode() == p.read_bytes()


def test_config_collects_every_violation():
    with pytest.raises(ConfigError) as exc:
        validate_config({"experiment": "chaos", "model": LIN, "n_ladder": [100, 50], "replicas": 4,
                         "criteria": {"bias_k_stderr": 3}, "functions": ["nope"], "bogus": 1,
                         "mu0": {"kind": "gaussian", "cov": -1.0}})
    fields = {k for k, _ in exc.value.problems}
    assert {"n_ladder", "replicas", "functions", "bogus", "mu0"} <= fields


def test_config_rejects_contraction_without_second_law():
    with pytest.raises(ConfigError):
        validate_config({"experiment": "contraction", "model": LIN})


def test_stderr_criteria_need_replicas():
    cfg = _cfg(experiment="chaos", n_ladder=[10, 20], replicas=8, criteria={"bias_k_stderr": 3})
    assert cfg.stderr_criteria() == ["bias_k_stderr"]


# contraction

@settings(max_examples=20, deadline=None)
@given(st.floats(-2, 2), st.floats(0.0, 2.0), st.floats(-2, 2), st.floats(0.0, 2.0))
def test_gaussian_w1_le_w2(m0, s0, m1, s1):
    C0, C1 = np.array([[s0 * s0]]), np.array([[s1 * s1]])
    a, b = gaussian_w1([m0], C0, [m1], C1), gaussian_w2([m0], C0, [m1], C1)
    assert a <= b + 1e-12 and a >= abs(m1 - m0) - 1e-12


def test_contraction_exact_rate_is_half():
    res = run_contraction(_cfg(criteria={"w2_rate": 0.5, "w2_rate_abs_tol": 1e-6, "w2_rate_at_least_lambda0": True}))
    assert res.passed
    assert res.fits["W2_rate"].estimate == pytest.approx(0.5, abs=1e-10)


def test_contraction_identical_laws_give_zero_distance():
    res = run_contraction(_cfg(mu1={"kind": "dirac", "x": 0.0}))
    assert all(v == 0 for v in res.column("W2"))
    assert res.fits["W2_rate"] is None and "W2_fit_refused" in res.summary


def test_contraction_particle_zero_when_laws_equal():
    doc = dict(mode="particle", mu1={"kind": "dirac", "x": 0.0}, params={"n_particles": 200},
               grid={"t_end": 1.0, "dt": 1e-2, "checkpoints": [0, 0.5, 1]})
    res = run_contraction(_cfg(**doc))
    assert all(v == 0 for v in res.column("W2"))


# chaos

def _chaos(ladder, **kw):
    doc = {"experiment": "chaos", "model": LIN, "n_ladder": ladder, "replicas": 8, "functions": ["id", "square"],
           "grid": {"t_end": 0.5, "dt": 1e-2, "checkpoints": [0.5]}}
    doc.update(kw)
    return validate_config(doc)


def test_chaos_ladder_of_one_refuses_fit():
    res = run_chaos(_chaos([50], criteria={"l2_slope_range": [-0.65, -0.35]}))
    assert res.fits["l2_slope"] is None and "l2_fit_refused" in res.summary
    assert not res.checks["l2_slope"]


def test_chaos_is_deterministic_and_l2_dominates_bias():
    a, b = run_chaos(_chaos([20, 40, 80])), run_chaos(_chaos([20, 40, 80]))
    assert a.rows == b.rows
    assert a.checks["l2_ge_bias"]
    assert {r["estimator"] for r in a.rows} == {"coupled"}


def test_chaos_csv_header_carries_hash(tmp_path):
    cfg = _chaos([20, 40, 80])
    res = run_chaos(cfg)
    csv_path, json_path = res.write(str(tmp_path))
    first = open(csv_path).readline()
    assert first.strip() == f"# experiment=chaos config_sha256={cfg.hash()}"
    assert json.load(open(json_path))["config_hash"] == cfg.hash()


# taylor

def _taylor(**kw):
    doc = {"experiment": "taylor", "model": LIN, "mode": "exact", "grid": {"t_end": 1.0, "dt": 1e-2},
           "functions": ["id"], "params": {"flow_paths": 16}}
    doc.update(kw)
    return validate_config(doc)


def test_taylor_identity_has_zero_remainders():
    res = run_taylor(_taylor(criteria={"zero_remainder_functions": ["id"]}))
    assert res.checks["zero_remainders_id"]
    assert res.fits["R1_slope_id"] is None and "R1_slope_id_refused" in res.summary


def test_taylor_cos_orders():
    res = run_taylor(_taylor(functions=["cos"], params={"flow": False}))
    assert res.fits["R1_slope_cos"].estimate == pytest.approx(2.0, abs=0.1)
    assert res.fits["R2_slope_cos"].estimate == pytest.approx(3.0, abs=0.15)
    assert res.checks["r2_le_r1_cos"]


def test_taylor_functional_needs_linear_drift():
    doc = {"kind": "langevin", "U": "quadratic", "alpha": 1.0, "V": "quadratic", "beta": 0.5}
    with pytest.raises(ValueError):
        run_taylor(_taylor(model=doc, params={"functional": True}))
