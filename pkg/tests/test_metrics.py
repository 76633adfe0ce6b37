import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvlab.metrics import (EmpiricalMeasure, integrate, moment_norm, sliced_wasserstein, wasserstein,
                           wasserstein_1d, wasserstein_bruteforce, wasserstein_exact)

pts = st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=7)


def test_measure_validation():
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.zeros((2, 1)), [0.5, 0.6])
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.zeros((2, 1)), [1.5, -0.5])
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.array([[np.nan]]), [1.0])


def test_integrate_reports_bad_atom():
    mu = EmpiricalMeasure.uniform(np.array([[1.0], [0.0]]))
    with pytest.raises(FloatingPointError, match="atom 1"):
        with np.errstate(divide="ignore"):
            integrate(mu, lambda x: 1.0 / x[:, 0])


def test_moment_norm():
    mu = EmpiricalMeasure.uniform(np.array([[3.0], [-3.0]]))
    assert moment_norm(mu, 2) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        moment_norm(mu, 0.5)


def test_translation_distance():
    a = np.random.default_rng(1).normal(size=(40, 1))
    mu, nu = EmpiricalMeasure.uniform(a), EmpiricalMeasure.uniform(a + 2.5)
    assert wasserstein_1d(mu, nu, 1) == pytest.approx(2.5)
    assert wasserstein_1d(mu, nu, 2) == pytest.approx(2.5)


def test_weighted_1d():
    # W1 between delta_0 and (delta_0 + delta_1)/2 is 1/2
    mu = EmpiricalMeasure.dirac([0.0])
    nu = EmpiricalMeasure(np.array([[0.0], [1.0]]), [0.5, 0.5])
    assert wasserstein_1d(mu, nu, 1) == pytest.approx(0.5)
    assert wasserstein_1d(mu, nu, 2) == pytest.approx(np.sqrt(0.5))


def test_exact_cap():
    a = np.zeros((300, 2))
    with pytest.raises(ValueError, match="capped"):
        wasserstein_exact(a, a)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 3), st.integers(0, 10_000))
def test_exact_equals_bruteforce(n, d, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(n, d)), rng.normal(size=(n, d))
    for p in (1, 2):
        assert wasserstein_exact(a, b, p) == pytest.approx(wasserstein_bruteforce(a, b, p), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 50), st.integers(0, 10_000))
def test_1d_matches_assignment(n, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(n, 1)), rng.normal(size=(n, 1))
    for p in (1, 2):
        assert wasserstein_1d(a, b, p) == pytest.approx(wasserstein_exact(a, b, p), rel=1e-10, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(1, 3), st.integers(0, 10_000))
def test_metric_axioms(n, d, seed):
    rng = np.random.default_rng(seed)
    a, b, c = (rng.normal(size=(n, d)) for _ in range(3))
    for p in (1, 2):
        ab, bc, ac = wasserstein(a, b, p), wasserstein(b, c, p), wasserstein(a, c, p)
        assert wasserstein(a, a, p) == pytest.approx(0.0, abs=1e-12)
        assert ab == pytest.approx(wasserstein(b, a, p), abs=1e-12)
        assert ac <= ab + bc + 1e-9


def test_sliced_bounded_by_exact():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(30, 3)), rng.normal(size=(30, 3)) + 1
    assert sliced_wasserstein(a, b, 2, n_proj=128) <= wasserstein_exact(a, b, 2) + 1e-12
