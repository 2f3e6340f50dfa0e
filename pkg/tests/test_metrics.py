import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hierforest.metrics import (ConfusionMatrix, RegressionReport, accuracy, average_confusion, bias,
                                confusion, mse, pi_coverage, regression_report, replicate_average,
                                sd_conventional, sd_over_n)
from hierforest.quantile import PredictionInterval

vec = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=50)


def test_bias():
    y = np.array([1.0, 2.0, 3.0])
    assert bias(y, y) == 0
    assert bias(y + 1, y) == 1
    assert bias([1, 2], [0, 0]) == 1.5


def test_sd_over_n():
    assert sd_over_n([3.0] * 5) == 0
    assert sd_over_n([0.0, 2.0]) == pytest.approx(math.sqrt(2) / 2)


@given(vec)
def test_sd_relation(p):
    n = len(p)
    assert sd_over_n(p) == pytest.approx(sd_conventional(p) * math.sqrt(n - 1) / n, rel=1e-9, abs=1e-9)


def test_mse():
    assert mse([1.0, 2.0], [1.0, 2.0]) == 0
    assert mse([1.0], [3.0]) == 4
    assert mse([1.0, -1.0], [0.0, 0.0]) == 1


@given(vec)
def test_mse_decomposition(r):
    r = np.array(r)
    y = np.zeros_like(r)
    assert mse(r, y) == pytest.approx(bias(r, y) ** 2 + np.var(r), rel=1e-9, abs=1e-9)


@given(vec, st.randoms())
def test_permutation_equivariance(p, rnd):
    y = [v * 0.5 + 1 for v in p]
    idx = list(range(len(p)))
    rnd.shuffle(idx)
    a = regression_report(p, y)
    b = regression_report([p[i] for i in idx], [y[i] for i in idx])
    for f in ("bias", "sd", "mse"):
        assert getattr(a, f) == pytest.approx(getattr(b, f), rel=1e-9, abs=1e-9)


def test_confusion_examples():
    perfect = confusion(["P", "N", "P"], ["P", "N", "P"], ("P", "N"))
    np.testing.assert_array_equal(perfect.percentages, [[100, 0], [0, 100]])
    wrong = confusion(["N", "P"], ["P", "N"], ("P", "N"))
    np.testing.assert_array_equal(wrong.percentages, [[0, 100], [100, 0]])
    m = ConfusionMatrix(("P", "N"), np.array([[9, 1], [1, 9]]))
    np.testing.assert_allclose(m.percentages, [[90, 10], [10, 90]])
    assert m.cells()["pred_P_actual_P"] == 90


@given(st.lists(st.tuples(st.sampled_from("abc"), st.sampled_from("abc")), min_size=1, max_size=60))
def test_confusion_counts(pairs):
    pred, y = zip(*pairs)
    m = confusion(pred, y, ("a", "b", "c"))
    assert m.n == len(pairs)
    col = m.counts.sum(axis=0)
    np.testing.assert_allclose(m.percentages * col / 100.0, m.counts, atol=1e-9)


def test_pi_coverage():
    ivs = [PredictionInterval(0, 1, 0.9), PredictionInterval(0, 1, 0.9)]
    assert pi_coverage(ivs, [0.5, 1.0]) == 1.0
    assert pi_coverage(ivs, [2.0, -1.0]) == 0.0
    assert pi_coverage(np.array([[0, 1], [0, 1]]), [0.5, 3.0]) == 0.5


def test_replicate_average():
    r = RegressionReport(0.1, 0.2, 2.0)
    one = replicate_average([r])
    assert (one.bias, one.sd, one.mse) == (0.1, 0.2, 2.0)
    two = replicate_average([RegressionReport(0, 0, 2.0), RegressionReport(0, 0, 4.0)])
    assert two.mse == 3.0


@given(st.lists(st.floats(0, 100), min_size=1, max_size=20), st.randoms())
def test_average_order_independent(ms, rnd):
    reps = [RegressionReport(m / 3, m / 7, m) for m in ms]
    shuffled = reps[:]
    rnd.shuffle(shuffled)
    a, b = replicate_average(reps), replicate_average(shuffled)
    assert (a.bias, a.sd, a.mse) == (b.bias, b.sd, b.mse)


def test_average_confusion_and_accuracy():
    a = ConfusionMatrix(("P", "N"), np.array([[10, 0], [0, 10]]))
    b = ConfusionMatrix(("P", "N"), np.array([[8, 4], [2, 6]]))
    np.testing.assert_allclose(average_confusion([a, b]), [[90, 20], [10, 80]])
    assert accuracy(["a", "b"], ["a", "a"]) == 0.5


def test_length_mismatch():
    with pytest.raises(ValueError):
        mse([1.0], [1.0, 2.0])
