"""Prediction intervals from a fitted forest, with no refitting.

The same trees that give the mean also give a weighted empirical
distribution of training responses for any query point.
"""

import numpy as np

from hierforest.forest import ForestConfig, fit
from hierforest.metrics import pi_coverage
from hierforest.quantile import QuantileIndex
from hierforest.simulate import LINEAR, ScenarioSpec, generate

train, test = generate(ScenarioSpec(LINEAR, n=500, b=1, seed=3), 0)
qi = QuantileIndex(fit(train.to_dataset(), ForestConfig(seed=3), threads=4))

row = {"x1": 0.5, "x2": 0.5, "x3": 0.4}
w = qi.weights(row)
print(f"query {row}")
print(f"  {np.count_nonzero(w)} of {len(w)} training rows carry weight; weights sum to {w.sum():.12f}")
print(f"  weighted mean {qi.weighted_mean(row):.4f} = forest mean {qi.forest.predict(row)[0]:.4f}")
for q in (0.05, 0.25, 0.5, 0.75, 0.95):
    print(f"  q={q:.2f} -> {qi.quantile(row, q):.4f}")
for level in (0.5, 0.8, 0.9):
    iv = qi.interval(row, level)
    print(f"  {level:.0%} interval [{iv.lower:.3f}, {iv.upper:.3f}]")

cov = pi_coverage(qi.bounds(test.to_dataset(), 0.9), test.y)
print(f"\nempirical coverage of the 90% interval on {len(test.y)} fresh rows: {cov:.3f}")
