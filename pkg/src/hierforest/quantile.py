"""Quantile regression forests.

A fitted regression forest assigns every query row a weight vector over the
training observations: in each tree the row lands in a leaf, and each member
of that leaf receives ``multiplicity / leaf_size``; the per-tree vectors are
averaged. The weighted empirical distribution of the training responses is
the conditional CDF estimate, its generalized inverse gives quantiles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .forest import REGRESSION, Forest, ForestError

# absorbs round-off in the running CDF sum when comparing against q
CDF_TOL = 1e-12


@dataclass(frozen=True)
class PredictionInterval:
    lower: float
    upper: float
    level: float

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError("lower bound exceeds upper bound")

    def contains(self, y) -> bool:
        return self.lower <= y <= self.upper


class QuantileIndex:
    """Leaf-membership tables of a regression forest plus its training responses."""

    def __init__(self, forest: Forest, y=None):
        if forest.task != REGRESSION:
            raise ForestError("quantile forests need a regression forest")
        y = forest.y_train if y is None else np.asarray(y, dtype=np.float64)
        if y is None or y.shape[0] != forest.n_train:
            raise ForestError("training responses missing or of the wrong length")
        self.forest = forest
        self.y = y
        self._order = np.argsort(y, kind="mergesort")
        self._member_off = forest.member_off

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def leaf_multiset(self, tree: int, leaf: int) -> np.ndarray:
        return self.forest.tree(tree).leaf_members(leaf)

    def weights(self, rows) -> np.ndarray:
        """Weight matrix of shape (n_query, n_train); a single record gives a vector."""
        f = self.forest
        X = f.encode(rows)
        leaves = f.leaves(X)
        w = _kernels.qrf_weights(leaves, f.node_off, self._member_off, f.leaf_start,
                                 f.leaf_end, f.members, self.n)
        return w[0] if _single(rows) else w

    def cdf(self, rows, y) -> np.ndarray:
        w = np.atleast_2d(self.weights(rows))
        return w @ (self.y[:, None] <= np.atleast_1d(y)[None, :]).astype(float)

    def quantiles(self, rows, qs) -> np.ndarray:
        """Quantiles at every level in ``qs``: shape (n_query, len(qs))."""
        qs = np.atleast_1d(np.asarray(qs, dtype=np.float64))
        if np.any((qs <= 0) | (qs >= 1)):
            raise ValueError("quantile levels must lie in (0, 1)")
        w = np.atleast_2d(self.weights(rows))
        return _kernels.weighted_quantiles(w, self._order, self.y, qs, CDF_TOL)

    def quantile(self, rows, q: float):
        out = self.quantiles(rows, [q])[:, 0]
        return float(out[0]) if _single(rows) else out

    def interval(self, rows, level: float = 0.9):
        """Central prediction interval(s) at ``level``."""
        if not 0 < level < 1:
            raise ValueError("level must lie in (0, 1)")
        b = self.quantiles(rows, [(1 - level) / 2, (1 + level) / 2])
        out = [PredictionInterval(float(lo), float(hi), level) for lo, hi in b]
        return out[0] if _single(rows) else out

    def bounds(self, rows, level: float = 0.9) -> np.ndarray:
        """Interval bounds as an (n, 2) array, for bulk use."""
        if not 0 < level < 1:
            raise ValueError("level must lie in (0, 1)")
        return self.quantiles(rows, [(1 - level) / 2, (1 + level) / 2])

    def weighted_mean(self, rows):
        out = np.atleast_2d(self.weights(rows)) @ self.y
        return float(out[0]) if _single(rows) else out


def _single(rows):
    from collections.abc import Mapping
    return isinstance(rows, Mapping) and all(np.ndim(v) == 0 for v in rows.values())


def weights(qi: QuantileIndex, row):
    return qi.weights(row)


def quantile(qi: QuantileIndex, row, q: float):
    return qi.quantile(row, q)


def interval(qi: QuantileIndex, row, level: float = 0.9):
    return qi.interval(row, level)


def weighted_mean(qi: QuantileIndex, row):
    return qi.weighted_mean(row)
