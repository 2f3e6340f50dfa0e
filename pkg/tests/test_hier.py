import numpy as np
import pytest

from hierforest._rng import derive_seed
from hierforest.dataset import Dataset, SchemaError
from hierforest.forest import ForestConfig, PredictionError
from hierforest.hier import (IN_SAMPLE, PREDICTED, HierarchicalModel, HierarchicalSpec, fit_hier,
                             fit_naive, out_of_bag, predict_hier)
from hierforest.simulate import LINEAR, ScenarioSpec, generate

SMALL = ForestConfig(n_trees=100)


def linear_desk(n=200, seed=0):
    tr, te = generate(ScenarioSpec(LINEAR, n=n, b=1, seed=seed), 0)
    return tr.to_dataset(), te.to_dataset(), te


def linear_spec(**kw):
    base = dict(proxies=("x1", "x2"), protected="x3", outcome="y", covariates=("x1", "x2"),
                bottom=SMALL, top=SMALL, seed=1)
    base.update(kw)
    return HierarchicalSpec(**base)


def zoned(n, accuracy, seed):
    """Binary protected class g from a 10-level proxy zone; flipped with prob 1-accuracy."""
    rng = np.random.default_rng(seed)
    zone = rng.integers(0, 10, n)
    g = (zone % 2 == 0).astype(int)
    flip = rng.random(n) > accuracy
    g = np.where(flip, 1 - g, g)
    x = rng.random(n)
    y = 3 * x + 2 * g + rng.normal(0, 0.3, n)
    return Dataset.from_columns({"zone": np.array([f"z{z}" for z in zone], dtype=object),
                                 "x": x, "g": np.array(["A", "B"], dtype=object)[g], "y": y},
                                response="y", levels={"zone": [f"z{i}" for i in range(10)],
                                                      "g": ["A", "B"]})


def zone_spec(seed=3):
    return HierarchicalSpec(proxies=("zone",), protected="g", outcome="y", covariates=("x",),
                            bottom=SMALL, top=SMALL, seed=seed)


def test_unawareness_constraint_enforced():
    with pytest.raises(SchemaError):
        linear_spec(covariates=("x1", "x3"))
    with pytest.raises(SchemaError):
        linear_spec(proxies=())
    with pytest.raises(SchemaError):
        linear_spec(proxies=("y",))


def test_top_forest_never_sees_protected():
    ds, _, _ = linear_desk()
    m = fit_hier(ds, linear_spec())
    assert "x3" not in m.top.feature_names
    assert PREDICTED in m.top.feature_names
    assert m.bottom.feature_names == ["x1", "x2"]


def test_deterministic_proxies_match_naive():
    ds = zoned(50, 1.0, seed=0)
    spec = zone_spec()
    m = fit_hier(ds, spec)
    pred, _ = out_of_bag(m.bottom, m.bottom.encode(ds), soft=False)
    oob_acc = np.mean(np.asarray(m.bottom.classes, dtype=object)[pred] == ds.labels("g"))
    assert oob_acc >= 0.95
    _, top_cfg = spec.layer_configs()
    naive = fit_naive(ds, "y", ("x", "g"), top_cfg)
    test = zoned(200, 1.0, seed=1)
    assert np.max(np.abs(m.predict(test) - naive.predict(test))) <= 0.5


def test_hier_converges_to_naive_as_bottom_accuracy_grows():
    test = zoned(400, 1.0, seed=99)
    gaps = []
    for acc in (0.6, 0.8, 1.0):
        ds = zoned(800, acc, seed=7)
        spec = zone_spec(seed=5)
        m = fit_hier(ds, spec)
        naive = fit_naive(ds, "y", ("x", "g"), spec.layer_configs()[1])
        gaps.append(float(np.mean(np.abs(m.predict(test) - naive.predict(test)))))
    assert gaps[0] > gaps[1] > gaps[2]


def test_minimal_dataset():
    ds = Dataset.from_columns({"p": [0.0, 1.0], "z": [0.5, 0.7], "c": [1.0, 2.0], "y": [3.0, 4.0]},
                              response="y")
    m = fit_hier(ds, HierarchicalSpec(("p",), "z", "y", ("c",), seed=0))
    assert np.all(m.bottom.node_off[1:] - m.bottom.node_off[:-1] == 1)
    assert np.all(m.top.node_off[1:] - m.top.node_off[:-1] == 1)
    assert m.oob_fallbacks >= 0


def test_prediction_ignores_raw_protected_value():
    ds, te, raw = linear_desk()
    m = fit_hier(ds, linear_spec())
    with_col = {"x1": raw.x1, "x2": raw.x2, "x3": raw.x3}
    shuffled = {"x1": raw.x1, "x2": raw.x2, "x3": raw.x3[::-1]}
    without = {"x1": raw.x1, "x2": raw.x2}
    a = m.predict(with_col)
    assert np.array_equal(a, m.predict(without))
    assert np.array_equal(a, m.predict(shuffled))
    assert predict_hier(m, {"x1": 0.2, "x2": 0.3}) == predict_hier(m, {"x1": 0.2, "x2": 0.3, "x3": 9.0})


def test_composition_oracle():
    ds, te, _ = linear_desk(seed=4)
    m = fit_hier(ds, linear_spec())
    step1 = m.bottom.predict({"x1": te["x1"], "x2": te["x2"]})
    step2 = m.top.predict({"x1": te["x1"], "x2": te["x2"], PREDICTED: step1})
    assert np.array_equal(m.predict(te), step2)


def test_constant_outcome():
    ds, te, _ = linear_desk(n=60)
    const = Dataset.from_columns({"x1": ds["x1"], "x2": ds["x2"], "x3": ds["x3"],
                                  "y": np.full(ds.n, 2.5)}, response="y")
    m = fit_hier(const, linear_spec())
    assert np.all(m.predict(te) == 2.5)


def test_missing_proxy_column():
    ds, _, _ = linear_desk(n=60)
    m = fit_hier(ds, linear_spec())
    with pytest.raises(PredictionError):
        m.predict({"x1": [0.1]})


def test_naive_arm():
    ds, te, raw = linear_desk(seed=2)
    a = fit_naive(ds, "y", ("x1", "x2", "x3"), ForestConfig(n_trees=50, seed=8))
    b = fit_naive(ds, "y", ("x1", "x2", "x3"), ForestConfig(n_trees=50, seed=8))
    assert "x3" in a.feature_names
    pa = a.predict(te)
    assert np.array_equal(pa, b.predict(te))
    mse = float(np.mean((pa - raw.y) ** 2))
    assert np.isfinite(mse) and mse >= 0.5 * 1.0 ** 2


def test_layer_seeds_are_derived():
    b, t = linear_spec(seed=42).layer_configs()
    assert b.seed == derive_seed(42, "bottom")
    assert t.seed == derive_seed(42, "top")
    assert b.seed != t.seed


def test_oob_fallback_counted():
    ds, _, _ = linear_desk(n=30)
    m = fit_hier(ds, linear_spec(bottom=ForestConfig(n_trees=1)))
    # with one tree every in-bag row has no out-of-bag prediction
    assert m.oob_fallbacks == len(np.unique(m.bottom.bootstrap[0]))


def test_in_sample_feed_and_soft_mode():
    ds = zoned(120, 0.8, seed=2)
    m1 = fit_hier(ds, HierarchicalSpec(("zone",), "g", "y", ("x",), SMALL, SMALL, feed=IN_SAMPLE, seed=1))
    assert m1.oob_fallbacks == 0
    m2 = fit_hier(ds, HierarchicalSpec(("zone",), "g", "y", ("x",), SMALL, SMALL, soft=True, seed=1))
    assert m2.predicted_columns == [f"{PREDICTED}[A]", f"{PREDICTED}[B]"]
    frac = m2.predict_protected(ds)
    np.testing.assert_allclose(frac.sum(axis=1), 1.0)


def test_bundle_roundtrip(tmp_path):
    ds = zoned(100, 0.9, seed=4)
    m = fit_hier(ds, zone_spec())
    m.save(tmp_path / "m.npz")
    back = HierarchicalModel.load(tmp_path / "m.npz")
    assert back.spec == m.spec
    assert np.array_equal(back.predict(ds), m.predict(ds))
