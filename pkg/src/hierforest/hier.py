"""Two-layer forest that uses a protected attribute only through its prediction.

The bottom forest learns the protected column from proxy columns. The top
forest learns the outcome from the ordinary covariates plus the bottom
forest's prediction, stored in the derived column ``predicted_protected``.
The raw protected column is never an input of the top forest, at fit or
predict time.
"""

from __future__ import annotations

import json
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ._rng import derive_seed
from .dataset import CATEGORICAL, NUMERIC, Dataset, SchemaError
from .forest import CLASSIFICATION, REGRESSION, Forest, ForestConfig, PredictionError, fit

PREDICTED = "predicted_protected"
OOB = "oob"
IN_SAMPLE = "in-sample"
BUNDLE_VERSION = 1


@dataclass(frozen=True)
class HierarchicalSpec:
    proxies: tuple
    protected: str
    outcome: str
    covariates: tuple
    bottom: ForestConfig = field(default_factory=ForestConfig)
    top: ForestConfig = field(default_factory=ForestConfig)
    feed: str = OOB
    soft: bool = False
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "proxies", tuple(self.proxies))
        object.__setattr__(self, "covariates", tuple(self.covariates))
        if not self.proxies:
            raise SchemaError("at least one proxy column is required")
        if self.protected in self.covariates:
            raise SchemaError(f"protected column {self.protected!r} may not be a top covariate")
        if self.outcome in self.proxies:
            raise SchemaError("the outcome column may not be a proxy")
        if self.protected in self.proxies:
            raise SchemaError("the protected column may not be its own proxy")
        if self.outcome in self.covariates:
            raise SchemaError("the outcome column may not be a covariate")
        if PREDICTED in self.covariates:
            raise SchemaError(f"{PREDICTED!r} is a reserved column name")
        if self.feed not in (OOB, IN_SAMPLE):
            raise SchemaError(f"unknown bottom-feed mode {self.feed!r}")

    def layer_configs(self) -> tuple[ForestConfig, ForestConfig]:
        """Bottom and top configs, with seeds drawn from ``seed`` when it is set."""
        if self.seed is None:
            return self.bottom, self.top
        return (replace(self.bottom, seed=derive_seed(self.seed, "bottom")),
                replace(self.top, seed=derive_seed(self.seed, "top")))

    def to_dict(self):
        d = asdict(self)
        d["proxies"] = list(self.proxies)
        d["covariates"] = list(self.covariates)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["bottom"] = ForestConfig(**d["bottom"])
        d["top"] = ForestConfig(**d["top"])
        return cls(**d)


class HierarchicalModel:
    def __init__(self, bottom: Forest, top: Forest, spec: HierarchicalSpec, oob_fallbacks: int = 0):
        self.bottom = bottom
        self.top = top
        self.spec = spec
        self.oob_fallbacks = oob_fallbacks
        if spec.protected in top.feature_names:
            raise SchemaError("top forest must not see the raw protected column")

    @property
    def predicted_columns(self) -> list[str]:
        if self.spec.soft and self.bottom.task == CLASSIFICATION:
            return [f"{PREDICTED}[{c}]" for c in self.bottom.classes]
        return [PREDICTED]

    def _inputs(self, rows, names):
        if isinstance(rows, Dataset):
            return {n: rows.labels(n) for n in names if n in rows}
        if isinstance(rows, Mapping):
            return {n: rows[n] for n in names if n in rows}
        raise PredictionError(f"cannot predict on rows of type {type(rows).__name__}")

    def predict_protected(self, rows):
        """Bottom-layer prediction: values, level names, or vote fractions (soft mode)."""
        x = self._inputs(rows, self.spec.proxies)
        missing = [p for p in self.spec.proxies if p not in x]
        if missing:
            raise PredictionError(f"query rows lack proxy columns {missing}")
        if self.bottom.task == CLASSIFICATION and self.spec.soft:
            return self.bottom.vote_fractions(x)
        return self.bottom.predict(x)

    def augment(self, rows, predicted) -> dict:
        """Top-layer input: covariates plus the predicted protected value(s)."""
        x = self._inputs(rows, self.spec.covariates)
        predicted = np.atleast_1d(np.asarray(predicted)) if np.ndim(predicted) < 2 else predicted
        if _single(rows):
            x = {k: np.atleast_1d(v) for k, v in x.items()}
        cols = self.predicted_columns
        if len(cols) == 1:
            x[cols[0]] = predicted
        else:
            for j, c in enumerate(cols):
                x[c] = predicted[:, j]
        return x

    def predict(self, rows):
        out = self.top.predict(self.augment(rows, self.predict_protected(rows)))
        if _single(rows):
            return float(out[0]) if self.top.task == REGRESSION else out[0]
        return out

    def save(self, path) -> None:
        header = {"format": "hierforest-bundle", "version": BUNDLE_VERSION,
                  "spec": self.spec.to_dict(), "oob_fallbacks": self.oob_fallbacks,
                  "bottom": self.bottom._header(), "top": self.top._header()}
        np.savez(path, header=np.array(json.dumps(header)),
                 **self.bottom._arrays("bottom/"), **self.top._arrays("top/"))

    @classmethod
    def load(cls, path) -> "HierarchicalModel":
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
        header = json.loads(str(arrays.pop("header")))
        if header.get("format") != "hierforest-bundle" or header.get("version") != BUNDLE_VERSION:
            raise ValueError("unsupported model bundle format/version")
        bottom = Forest._from_parts(header["bottom"], arrays, "bottom/")
        top = Forest._from_parts(header["top"], arrays, "top/")
        return cls(bottom, top, HierarchicalSpec.from_dict(header["spec"]), header["oob_fallbacks"])


def _single(rows):
    return isinstance(rows, Mapping) and all(np.ndim(v) == 0 for v in rows.values())


def out_of_bag(forest: Forest, X: np.ndarray, soft: bool = False):
    """Out-of-bag predictions for the training rows ``X``.

    Returns ``(prediction, n_fallback)``; rows that every bootstrap sample
    contained get the full-forest prediction and are counted in ``n_fallback``.
    Classification predictions are class codes (or fractions when ``soft``).
    """
    n = X.shape[0]
    per_tree = forest.tree_predictions(X)
    inbag = np.zeros((forest.n_trees, n), dtype=bool)
    rows = np.repeat(np.arange(forest.n_trees), forest.bootstrap.shape[1])
    inbag[rows, forest.bootstrap.ravel()] = True
    oob = ~inbag
    n_oob = oob.sum(axis=0)
    fallback = n_oob == 0
    if forest.task == REGRESSION:
        with np.errstate(invalid="ignore", divide="ignore"):
            pred = np.where(oob, per_tree, 0.0).sum(axis=0) / n_oob
        pred[fallback] = per_tree[:, fallback].mean(axis=0)
        return pred, int(fallback.sum())
    k = len(forest.classes)
    votes = np.zeros((n, k))
    full = np.zeros((n, k))
    codes = per_tree.astype(np.int64)
    for c in range(k):
        hit = codes == c
        votes[:, c] = (hit & oob).sum(axis=0)
        full[:, c] = hit.sum(axis=0)
    votes[fallback] = full[fallback]
    frac = votes / votes.sum(axis=1, keepdims=True)
    return (frac if soft else frac.argmax(axis=1)), int(fallback.sum())


def fit_hier(ds: Dataset, spec: HierarchicalSpec, threads: int = 1) -> HierarchicalModel:
    """Fit the bottom forest (proxies -> protected) and then the top forest."""
    for name in spec.proxies + spec.covariates + (spec.protected, spec.outcome):
        if name not in ds:
            raise SchemaError(f"dataset lacks column {name!r}")
    bottom_cfg, top_cfg = spec.layer_configs()
    bottom_ds = ds.select(spec.proxies, spec.protected)
    bottom = fit(bottom_ds, bottom_cfg, threads=threads)
    X = bottom.encode(bottom_ds)

    fallbacks = 0
    if spec.feed == OOB:
        pred, fallbacks = out_of_bag(bottom, X, soft=spec.soft)
    elif bottom.task == CLASSIFICATION:
        frac = bottom.vote_fractions(X)
        pred = frac if spec.soft else frac.argmax(axis=1)
    else:
        pred = bottom.predict(X)

    top_ds = ds.select(spec.covariates, spec.outcome)
    if bottom.task == REGRESSION:
        top_ds = top_ds.with_column(PREDICTED, pred, NUMERIC)
    elif spec.soft:
        for j, c in enumerate(bottom.classes):
            top_ds = top_ds.with_column(f"{PREDICTED}[{c}]", pred[:, j], NUMERIC)
    else:
        top_ds = top_ds.with_column(PREDICTED, pred, CATEGORICAL, bottom.classes)
    top = fit(top_ds, top_cfg, threads=threads)
    return HierarchicalModel(bottom, top, spec, fallbacks)


def predict_hier(m: HierarchicalModel, rows):
    return m.predict(rows)


def fit_naive(ds: Dataset, outcome: str, covariates, cfg: ForestConfig = ForestConfig(),
              threads: int = 1) -> Forest:
    """Plain forest on ``covariates`` (raw protected column included) -> ``outcome``."""
    return fit(ds.select(list(covariates), outcome), cfg, threads=threads)
