import logging
import re

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from hierforest.forest import ForestConfig
from hierforest.simulate import (ARMS, CLASSIFICATION, LINEAR, NONLINEAR, ScenarioSpec, StudyResult,
                                 generate, normal_cdf, plot_predictions, run_study, sample_response,
                                 signal, table_rows, write_table)

FAST = ForestConfig(n_trees=100, mtry_rule="round")


def study(scenario, n=200, b=2, seed=0, **kw):
    spec = ScenarioSpec(scenario, n=n, b=b, seed=seed)
    return run_study(spec, FAST, FAST, FAST, **kw)


def test_nonlinear_factor_zero_at_half():
    x3 = np.array([0.1, 0.7])
    np.testing.assert_allclose(signal(NONLINEAR, np.full(2, 0.5), np.array([0.9, 0.3]), x3), np.cos(x3))


def test_nonlinear_positive_part():
    x3 = np.array([0.2, 0.4])
    np.testing.assert_allclose(signal(NONLINEAR, np.array([0.0, 1.0]), np.array([0.1, 0.25]), x3),
                               np.cos(x3))


def test_classification_probability_half():
    assert signal(CLASSIFICATION, 1.0, 0.5, 0.0) == 0.5


@pytest.mark.parametrize("z", [-8.0, -3.3, -1.0, -1e-3, 0.0, 0.4, 1.96, 5.0, 12.0])
def test_normal_cdf_against_high_precision(z):
    mpmath.mp.dps = 40
    assert abs(float(normal_cdf(z)) - float(mpmath.ncdf(z))) <= 1e-12


def test_bernoulli_mean_at_fixed_point():
    rng = np.random.default_rng(0)
    n = 10_000
    x1, x2, x3 = np.full(n, 0.9), np.full(n, 0.45), np.full(n, 0.08)
    y, mu = sample_response(CLASSIFICATION, x1, x2, x3, rng)
    p = mu[0]
    se = np.sqrt(p * (1 - p) / n)
    assert abs(np.mean(y == "P") - p) <= 3 * se


@given(st.integers(0, 2**31), st.sampled_from([LINEAR, NONLINEAR, CLASSIFICATION]))
def test_x3_bounded(seed, scenario):
    tr, te = generate(ScenarioSpec(scenario, n=50, b=1, seed=seed), 0)
    for d in (tr, te):
        assert d.x3.min() >= 0 and d.x3.max() <= 1


def test_generate_is_keyed_by_replicate():
    spec = ScenarioSpec(LINEAR, n=30, b=5, seed=3)
    a, _ = generate(spec, 2)
    b, _ = generate(spec, 2)
    c, _ = generate(spec, 3)
    assert np.array_equal(a.y, b.y) and not np.array_equal(a.y, c.y)
    with pytest.raises(IndexError):
        generate(spec, 5)


def test_linear_desk_arms_close():
    res = study(LINEAR, n=200, b=20, seed=5)
    m = {a: res.arms[a].average.mse for a in ARMS}
    assert abs(m["with_proxy"] - m["without_proxy"]) / m["without_proxy"] <= 0.15


def test_classification_diagonals():
    res = study(CLASSIFICATION, n=500, b=3, seed=2)
    for a in ARMS:
        assert np.all(np.diag(res.arms[a].confusion_pct) > 80)


def test_tables_reproducible(tmp_path):
    a = write_table(study(LINEAR, b=1, seed=9), tmp_path / "a.csv")
    b = write_table(study(LINEAR, b=1, seed=9), tmp_path / "b.csv")
    assert a.read_bytes() == b.read_bytes()
    rows = a.read_text().splitlines()
    assert rows[0] == "scenario,arm,bias,sd_over_n,sd_conventional,mse,pi_coverage"
    assert [r.split(",")[1] for r in rows[1:]] == list(ARMS)


def test_replicate_order_irrelevant():
    spec = ScenarioSpec(NONLINEAR, n=100, b=3, seed=1)
    a = run_study(spec, FAST, FAST, FAST, replicates=[0, 1, 2])
    b = run_study(spec, FAST, FAST, FAST, replicates=[2, 0, 1])
    for arm in ARMS:
        assert a.arms[arm].average == b.arms[arm].average


def test_bottom_layer_beats_constant():
    res = study(LINEAR, n=300, b=2, seed=4)
    assert all(m < v for m, v in zip(res.protected_mse, res.protected_var))


def test_classification_table_columns():
    rows = table_rows(study(CLASSIFICATION, n=100, b=1))
    assert set(rows[0]) == {"scenario", "arm", "pred_P_actual_P_pct", "pred_P_actual_N_pct",
                            "pred_N_actual_P_pct", "pred_N_actual_N_pct"}
    p = float(rows[0]["pred_P_actual_P_pct"]) + float(rows[0]["pred_N_actual_P_pct"])
    assert p == pytest.approx(100.0, abs=1e-3)


def test_plot_empty_results(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        assert plot_predictions(None, tmp_path) == []
    assert list(tmp_path.iterdir()) == []
    assert "no simulation results" in caplog.text


def test_regression_plot_has_one_dot_per_point(tmp_path):
    res = study(LINEAR, n=120, b=1)
    paths = plot_predictions(res, tmp_path)
    assert [p.name for p in paths] == ["linear_without_proxy.svg", "linear_with_proxy.svg",
                                       "linear_protected.svg"]
    text = paths[0].read_text()
    assert len(re.findall(r'<circle class="obs"', text)) == 120
    assert 'class="band"' in text


def test_classification_plot_has_no_band(tmp_path):
    res = study(CLASSIFICATION, n=100, b=1)
    text = plot_predictions(res, tmp_path)[0].read_text()
    assert 'class="band"' not in text
    assert len(re.findall(r'<circle class="obs"', text)) == 100


def test_spec_validation():
    with pytest.raises(ValueError):
        ScenarioSpec("quadratic")
    with pytest.raises(ValueError):
        ScenarioSpec(LINEAR, noise_sd=0)
