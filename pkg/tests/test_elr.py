import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chi2

from fpvls.elr import (chi2_threshold, el_weights, elr_statistic, elr_test, median_bandwidth,
                       mmd_h, quadratic_mmd2, solve_lambda, two_sample_test)

# frozen oracle: h = (0.5, 0.5, -0.2) has lambda = 8/3 and weights (1/7, 1/7, 5/7)
H3 = np.array([0.5, 0.5, -0.2])


def test_lambda_closed_form():
    assert solve_lambda(H3) == pytest.approx(8 / 3, rel=1e-9)


def test_weights_closed_form():
    w = el_weights(H3, 8 / 3)
    assert w == pytest.approx([1 / 7, 1 / 7, 5 / 7])
    assert w.sum() == pytest.approx(1.0)
    assert np.dot(w, H3) == pytest.approx(0.0, abs=1e-12)


def test_statistic_closed_form():
    expect = -2 * (2 * math.log(3 / 7) + math.log(15 / 7))
    assert elr_statistic(H3) == pytest.approx(expect, rel=1e-9)


def test_no_root_when_zero_outside_hull():
    assert solve_lambda(np.array([0.1, 0.2, 0.3])) is None
    r = elr_test(np.array([-0.1, -0.3]), 3.841)
    assert r.statistic == math.inf and not r.accept and r.reason == "no_root"


def test_all_zero_h_accepts():
    r = elr_test(np.zeros(4), 3.841)
    assert r.lam == 0.0 and r.statistic == 0.0 and r.accept


def test_threshold_default_and_override():
    assert chi2_threshold(0.95) == pytest.approx(3.841, abs=1e-3)
    assert chi2_threshold(0.95, 7.0) == 7.0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=30))
def test_root_satisfies_constraint(h):
    h = np.array(h)
    lam = solve_lambda(h)
    if lam is None:
        assert h.min() >= 0 or h.max() <= 0
        return
    assert np.all(1 + lam * h > 0)
    if np.any(h != 0):
        assert abs(np.sum(h / (1 + lam * h))) < 1e-6 * max(1.0, np.abs(h).sum())


def test_mmd_h_pairing():
    x = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = x + 10
    h = mmd_h(x, y, bandwidth=1e6)
    assert h.shape == (2,)
    assert np.allclose(h, 0.0, atol=1e-9)


def test_mmd_h_shape_mismatch():
    with pytest.raises(ValueError):
        mmd_h(np.zeros((4, 2)), np.zeros((3, 2)), 1.0)


def test_linear_estimate_unbiased_for_quadratic():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(8, 3))
    y = rng.normal(0.5, 1, size=(8, 3))
    bw = median_bandwidth(x, y)
    means = []
    for _ in range(3000):
        means.append(mmd_h(x[rng.permutation(8)], y[rng.permutation(8)], bw).mean())
    means = np.array(means)
    se = means.std(ddof=1) / np.sqrt(len(means))
    assert abs(means.mean() - quadratic_mmd2(x, y, bw)) < 4 * se


def test_identical_samples_accept():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(20, 32))
    r = two_sample_test(x, x.copy())
    assert r.accept


def test_shifted_samples_reject():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(40, 32))
    y = rng.normal(size=(40, 32)) + 2.0
    assert not two_sample_test(x, y).accept


def test_too_short():
    r = two_sample_test(np.zeros((1, 32)), np.zeros((1, 32)))
    assert r.reason == "too_short" and not r.accept


def test_null_rejection_rate_small_sample():
    rng = np.random.default_rng(3)
    rej = sum(not two_sample_test(rng.normal(size=(20, 32)), rng.normal(size=(20, 32))).accept
              for _ in range(300))
    assert rej / 300 < 0.15


def test_statistic_is_chi2_scale():
    rng = np.random.default_rng(4)
    t = [elr_test(rng.normal(size=200), 3.841).statistic for _ in range(400)]
    assert np.mean(t) == pytest.approx(chi2.mean(1), abs=0.25)
