"""Accuracy summaries: bias, spread, MSE, confusion matrices, interval coverage."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np


@dataclass(frozen=True)
class RegressionReport:
    """Per-replicate (or averaged) regression accuracy.

    ``sd`` follows the table convention ``sqrt(sum((p - mean(p))**2)) / N``;
    ``sd_conventional`` is the usual sample standard deviation of the
    predictions. ``pi_coverage`` is NaN when no intervals were evaluated.
    """

    bias: float
    sd: float
    mse: float
    sd_conventional: float = float("nan")
    pi_coverage: float = float("nan")

    def as_row(self) -> dict:
        return asdict(self)


def _pair(pred, y):
    pred = np.asarray(pred, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if pred.shape != y.shape or pred.ndim != 1:
        raise ValueError("predictions and responses must be 1-d and of equal length")
    if pred.size == 0:
        raise ValueError("need at least one observation")
    return pred, y


def bias(pred, y) -> float:
    pred, y = _pair(pred, y)
    return float((pred.sum() - y.sum()) / pred.size)


def sd_over_n(pred) -> float:
    """``sqrt(sum((p - mean(p))**2)) / N`` -- the root is divided by N, not sqrt(N)."""
    p = np.asarray(pred, dtype=np.float64)
    if p.size == 0:
        raise ValueError("need at least one observation")
    return float(np.sqrt(np.sum((p - p.mean()) ** 2)) / p.size)


def sd_conventional(pred) -> float:
    """Sample standard deviation (N - 1 denominator); 0 for a single value."""
    p = np.asarray(pred, dtype=np.float64)
    if p.size == 0:
        raise ValueError("need at least one observation")
    return float(p.std(ddof=1)) if p.size > 1 else 0.0


def mse(pred, y) -> float:
    pred, y = _pair(pred, y)
    return float(np.mean((pred - y) ** 2))


def pi_coverage(intervals, y) -> float:
    """Share of responses inside their interval (bounds inclusive).

    ``intervals`` is a sequence of objects with ``lower``/``upper`` or an
    (n, 2) array of bounds.
    """
    y = np.asarray(y, dtype=np.float64)
    if isinstance(intervals, np.ndarray):
        lo, hi = intervals[:, 0], intervals[:, 1]
    else:
        lo = np.array([iv.lower for iv in intervals])
        hi = np.array([iv.upper for iv in intervals])
    if lo.shape != y.shape:
        raise ValueError("one interval per response is required")
    return float(np.mean((lo <= y) & (y <= hi)))


def regression_report(pred, y, intervals=None) -> RegressionReport:
    cov = pi_coverage(intervals, y) if intervals is not None else float("nan")
    return RegressionReport(bias(pred, y), sd_over_n(pred), mse(pred, y),
                            sd_conventional(pred), cov)


def replicate_average(reports) -> RegressionReport:
    """Field-wise mean over replications (exactly order-independent)."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to average")
    return RegressionReport(**{
        f.name: math.fsum(getattr(r, f.name) for r in reports) / len(reports)
        for f in fields(RegressionReport)})


@dataclass(frozen=True)
class ConfusionMatrix:
    """``counts[i, j]`` = rows predicted ``levels[i]`` whose actual level is ``levels[j]``."""

    levels: tuple
    counts: np.ndarray

    @property
    def percentages(self) -> np.ndarray:
        """Counts normalised within each actual-level column, in percent."""
        col = self.counts.sum(axis=0, keepdims=True).astype(np.float64)
        with np.errstate(invalid="ignore", divide="ignore"):
            pct = np.where(col > 0, 100.0 * self.counts / col, 0.0)
        return pct

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def diagonal(self) -> np.ndarray:
        return np.diag(self.percentages)

    def cells(self) -> dict:
        pct = self.percentages
        return {f"pred_{a}_actual_{b}": float(pct[i, j])
                for i, a in enumerate(self.levels) for j, b in enumerate(self.levels)}


def confusion(pred, y, levels=None) -> ConfusionMatrix:
    pred = np.asarray(pred, dtype=object)
    y = np.asarray(y, dtype=object)
    if pred.shape != y.shape:
        raise ValueError("predictions and responses must have equal length")
    if levels is None:
        levels = tuple(dict.fromkeys(list(y) + list(pred)))
    index = {l: i for i, l in enumerate(levels)}
    counts = np.zeros((len(levels), len(levels)), dtype=np.int64)
    for p, a in zip(pred, y):
        counts[index[p], index[a]] += 1
    return ConfusionMatrix(tuple(levels), counts)


def average_confusion(mats) -> np.ndarray:
    """Mean of the column-normalised percentage matrices of several replicates."""
    pcts = [m.percentages for m in mats]
    if not pcts:
        raise ValueError("no confusion matrices to average")
    out = np.empty_like(pcts[0])
    for idx in np.ndindex(out.shape):
        out[idx] = math.fsum(p[idx] for p in pcts) / len(pcts)
    return out


def accuracy(pred, y) -> float:
    pred = np.asarray(pred, dtype=object)
    y = np.asarray(y, dtype=object)
    return float(np.mean(pred == y))
