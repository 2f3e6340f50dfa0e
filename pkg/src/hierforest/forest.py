"""Bootstrap-aggregated CART forests for regression and classification."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Mapping, NamedTuple

import numpy as np

from . import _kernels
from ._rng import generator
from .dataset import (CATEGORICAL, DATE, NUMERIC, RESPONSE, ColumnSchema, Dataset,
                      DatasetError)

REGRESSION = "regression"
CLASSIFICATION = "classification"
FORMAT_VERSION = 1


class ForestError(ValueError):
    pass


class PredictionError(ForestError):
    pass


@dataclass(frozen=True)
class ForestConfig:
    """Hyper-parameters of a forest.

    ``mtry`` and ``min_node_size`` left as ``None`` resolve at fit time to
    ``max(1, floor(sqrt(p)))`` and 5 (regression) / 1 (classification).
    With ``mtry_rule="round"`` the default becomes ``max(1, round(sqrt(p)))``.
    ``task`` left as ``None`` follows the response column.
    """

    n_trees: int = 500
    mtry: int | None = None
    min_node_size: int | None = None
    bootstrap: bool = True
    seed: int = 0
    task: str | None = None
    mtry_rule: str = "floor"

    def __post_init__(self):
        if self.mtry_rule not in ("floor", "round"):
            raise ForestError(f"unknown mtry rule {self.mtry_rule!r}")
        if self.n_trees < 1:
            raise ForestError("n_trees must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ForestError("mtry must be >= 1")
        if self.min_node_size is not None and self.min_node_size < 1:
            raise ForestError("min_node_size must be >= 1")
        if self.task not in (None, REGRESSION, CLASSIFICATION):
            raise ForestError(f"unknown task {self.task!r}")

    def resolve(self, p: int, task: str) -> "ForestConfig":
        mtry = self.mtry
        if mtry is None:
            mtry = max(1, math.isqrt(p) if self.mtry_rule == "floor" else round(math.sqrt(p)))
        if mtry > p:
            raise ForestError(f"mtry={mtry} exceeds the {p} available features")
        node = self.min_node_size
        if node is None:
            node = 5 if task == REGRESSION else 1
        return replace(self, mtry=mtry, min_node_size=node, task=task)


class Tree(NamedTuple):
    """Read-only view of one tree's node arrays (local node indices)."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    leaf_start: np.ndarray
    leaf_end: np.ndarray
    members: np.ndarray
    bootstrap: np.ndarray

    @property
    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)

    def leaf_members(self, leaf: int) -> np.ndarray:
        return self.members[self.leaf_start[leaf]:self.leaf_end[leaf]]


def _features_schema(ds: Dataset) -> list[ColumnSchema]:
    out = []
    for c in ds.schema:
        if c.kind == RESPONSE:
            continue
        if c.kind == DATE:
            raise ForestError(f"date column {c.name!r} cannot be a split feature; "
                              "derive numeric features from it first")
        out.append(c)
    return out


class Forest:
    """A fitted forest. Build with :func:`fit`; immutable afterwards."""

    def __init__(self, config, features, response, trees_flat, bootstrap, y_train=None):
        self.config = config
        self.features = list(features)
        self.response = response
        (self.node_off, self.feature, self.threshold, self.left, self.right, self.value,
         self.leaf_start, self.leaf_end, self.members) = trees_flat
        self.bootstrap = bootstrap
        self.y_train = y_train
        self._is_cat = np.array([c.is_categorical for c in self.features], dtype=np.bool_)
        self._index = {c.name: i for i, c in enumerate(self.features)}
        for a in (self.node_off, self.feature, self.threshold, self.left, self.right,
                  self.value, self.leaf_start, self.leaf_end, self.members, self.bootstrap):
            a.setflags(write=False)

    @property
    def task(self) -> str:
        return self.config.task

    @property
    def n_trees(self) -> int:
        return self.config.n_trees

    @property
    def n_train(self) -> int:
        return self.bootstrap.shape[1]

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.features]

    @property
    def classes(self) -> tuple:
        return self.response.levels

    @property
    def member_off(self) -> np.ndarray:
        return np.arange(self.n_trees + 1, dtype=np.int64) * self.members.shape[0] // max(self.n_trees, 1)

    def tree(self, t: int) -> Tree:
        a, b = self.node_off[t], self.node_off[t + 1]
        m = self.members.shape[0] // self.n_trees
        return Tree(self.feature[a:b], self.threshold[a:b], self.left[a:b], self.right[a:b],
                    self.value[a:b], self.leaf_start[a:b], self.leaf_end[a:b],
                    self.members[t * m:(t + 1) * m], self.bootstrap[t])

    def split_features(self) -> set[str]:
        """Names of every feature used by at least one split."""
        used = np.unique(self.feature[self.feature >= 0])
        return {self.features[i].name for i in used}

    # encoding
    def encode(self, rows) -> np.ndarray:
        """Encode query rows as the float matrix the kernels route.

        ``rows`` is a :class:`Dataset`, a mapping of column -> values, or a
        single record (mapping of column -> scalar). Columns the forest does
        not use are ignored. Categorical values unseen at training time are
        mapped to the reserved "other" code, which never goes left at a split.
        """
        if isinstance(rows, Dataset):
            getter = rows.__getitem__
            n = rows.n
        elif isinstance(rows, Mapping):
            single = all(np.ndim(v) == 0 for v in rows.values())
            data = {k: (np.asarray([v]) if single else np.asarray(v)) for k, v in rows.items()}
            getter = data.__getitem__
            n = len(next(iter(data.values()))) if data else 0
        else:
            raise PredictionError(f"cannot encode rows of type {type(rows).__name__}")
        X = np.empty((n, len(self.features)), dtype=np.float64)
        for j, c in enumerate(self.features):
            try:
                v = getter(c.name)
            except KeyError:
                raise PredictionError(f"query rows lack feature column {c.name!r}") from None
            if len(v) != n:
                raise PredictionError(f"column {c.name!r} has the wrong length")
            if c.is_categorical:
                if isinstance(rows, Dataset):
                    src = rows.column_schema(c.name)
                    if not src.is_categorical:
                        raise PredictionError(f"column {c.name!r} is not categorical")
                    remap = np.array([_code(c.levels, l) for l in src.levels] + [len(c.levels)],
                                     dtype=np.float64)
                    X[:, j] = remap[v]
                else:
                    lookup = {l: i for i, l in enumerate(c.levels)}
                    X[:, j] = [lookup.get(str(x), len(c.levels)) for x in v]
            else:
                try:
                    X[:, j] = np.asarray(v, dtype=np.float64)
                except (TypeError, ValueError):
                    raise PredictionError(f"column {c.name!r} is not numeric") from None
        return X

    def _X(self, rows):
        return rows if isinstance(rows, np.ndarray) else self.encode(rows)

    # routing and prediction
    def leaves(self, rows) -> np.ndarray:
        """Leaf ids reached by every query row in every tree, shape (T, n)."""
        X = self._X(rows)
        return _kernels.route(X, self._is_cat, self.node_off, self.feature, self.threshold,
                              self.left, self.right)

    def tree_predictions(self, rows) -> np.ndarray:
        """Per-tree leaf values (means or class codes), shape (T, n)."""
        lv = self.leaves(rows)
        return self.value[self.node_off[:-1, None] + lv]

    def predict(self, rows) -> np.ndarray:
        """Forest mean (regression) or majority level name (classification)."""
        if self.task == REGRESSION:
            return self.tree_predictions(rows).mean(axis=0)
        return np.asarray(self.classes, dtype=object)[self.vote_fractions(rows).argmax(axis=1)]

    def vote_fractions(self, rows) -> np.ndarray:
        """Share of trees voting for each level, shape (n, n_classes)."""
        if self.task != CLASSIFICATION:
            raise PredictionError("vote fractions need a classification forest")
        votes = self.tree_predictions(rows).astype(np.int64)
        k = len(self.classes)
        counts = np.zeros((votes.shape[1], k))
        for c in range(k):
            counts[:, c] = (votes == c).sum(axis=0)
        return counts / self.n_trees

    # persistence
    def save(self, path) -> None:
        np.savez(path, **self._arrays(""), **{"header": np.array(json.dumps(self._header()))})

    def _header(self):
        return {"format": "hierforest-forest", "version": FORMAT_VERSION,
                "config": asdict(self.config),
                "features": [c.to_dict() for c in self.features],
                "response": self.response.to_dict()}

    def _arrays(self, prefix):
        d = {"node_off": self.node_off, "feature": self.feature, "threshold": self.threshold,
             "left": self.left, "right": self.right, "value": self.value,
             "leaf_start": self.leaf_start, "leaf_end": self.leaf_end,
             "members": self.members, "bootstrap": self.bootstrap}
        if self.y_train is not None:
            d["y_train"] = self.y_train
        return {prefix + k: v for k, v in d.items()}

    @classmethod
    def _from_parts(cls, header, arrays, prefix=""):
        if header.get("format") != "hierforest-forest" or header.get("version") != FORMAT_VERSION:
            raise ForestError("unsupported forest file format/version")
        flat = tuple(arrays[prefix + k] for k in ("node_off", "feature", "threshold", "left",
                                                   "right", "value", "leaf_start", "leaf_end",
                                                   "members"))
        y = arrays[prefix + "y_train"] if prefix + "y_train" in arrays else None
        return cls(ForestConfig(**header["config"]),
                   [ColumnSchema.from_dict(c) for c in header["features"]],
                   ColumnSchema.from_dict(header["response"]), flat,
                   arrays[prefix + "bootstrap"], y)

    @classmethod
    def load(cls, path) -> "Forest":
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
        return cls._from_parts(json.loads(str(arrays.pop("header"))), arrays)

    def __repr__(self):
        return (f"Forest(task={self.task!r}, n_trees={self.n_trees}, "
                f"features={self.feature_names}, response={self.response.name!r})")


def _code(levels, label):
    try:
        return levels.index(label)
    except ValueError:
        return len(levels)


def _grow(t, X, y, is_cat, n_levels, n_classes, cfg, n):
    g = generator(cfg.seed, "tree", t)
    if cfg.bootstrap:
        boot = g.integers(0, n, size=n, dtype=np.int64)
    else:
        boot = np.arange(n, dtype=np.int64)
    feat_seed = int(g.integers(0, 2**63, dtype=np.int64))
    out = _kernels.grow_tree(X, y, is_cat, n_levels, n_classes, boot, cfg.mtry,
                             cfg.min_node_size, feat_seed)
    return out, boot


def fit(ds: Dataset, cfg: ForestConfig = ForestConfig(), threads: int = 1) -> Forest:
    """Grow ``cfg.n_trees`` CART trees on independent bootstrap samples of ``ds``.

    Tree ``t`` depends only on ``(cfg.seed, t)``, so ``threads`` changes the
    wall-clock time and nothing else.
    """
    if ds.n == 0:
        raise DatasetError("cannot fit a forest on an empty dataset")
    if ds.n < 2:
        raise DatasetError("need at least 2 rows to fit a forest")
    response = ds.column_schema(ds.response)
    task = CLASSIFICATION if response.is_categorical else REGRESSION
    if cfg.task is not None and cfg.task != task:
        raise ForestError(f"config task {cfg.task!r} does not match a {task} response")
    features = _features_schema(ds)
    if not features:
        raise ForestError("no predictor columns")
    cfg = cfg.resolve(len(features), task)

    X = np.empty((ds.n, len(features)), dtype=np.float64)
    for j, c in enumerate(features):
        X[:, j] = ds[c.name]
    y = np.asarray(ds[ds.response], dtype=np.float64)
    is_cat = np.array([c.is_categorical for c in features], dtype=np.bool_)
    n_levels = np.array([len(c.levels) for c in features], dtype=np.int64)
    n_classes = len(response.levels) if task == CLASSIFICATION else 0

    def work(t):
        return _grow(t, X, y, is_cat, n_levels, n_classes, cfg, ds.n)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(cfg.n_trees)))
    else:
        results = [work(t) for t in range(cfg.n_trees)]

    sizes = [r[0][0].shape[0] for r in results]
    node_off = np.zeros(cfg.n_trees + 1, dtype=np.int64)
    node_off[1:] = np.cumsum(sizes)
    parts = list(zip(*(r[0] for r in results)))
    flat = (node_off,) + tuple(np.concatenate(parts[i]) for i in range(7)) + (
        np.concatenate(parts[7]).astype(np.int64),)
    bootstrap = np.stack([r[1] for r in results])
    return Forest(cfg, features, response, flat, bootstrap, y_train=y.copy())


def predict_mean(f: Forest, rows) -> np.ndarray | float:
    """Average of the per-tree leaf means. A single record gives a float."""
    if f.task != REGRESSION:
        raise PredictionError("predict_mean needs a regression forest")
    out = f.predict(rows)
    return float(out[0]) if _is_record(rows) else out


def predict_class(f: Forest, rows):
    """Majority vote. Ties go to the level listed first in the response schema.

    For a single record returns ``(level, {level: vote_fraction})``; for many
    rows returns ``(levels_array, fractions_matrix)``.
    """
    frac = f.vote_fractions(rows)
    labels = np.asarray(f.classes, dtype=object)[frac.argmax(axis=1)]
    if _is_record(rows):
        return labels[0], dict(zip(f.classes, frac[0].tolist()))
    return labels, frac


def leaf_of(f: Forest, tree: int, row) -> int:
    if not 0 <= tree < f.n_trees:
        raise IndexError(f"tree {tree} out of range")
    X = f.encode(row)
    a, b = f.node_off[tree], f.node_off[tree + 1]
    lv = _kernels.route(X, f._is_cat, np.array([0, b - a]), f.feature[a:b],
                        f.threshold[a:b], f.left[a:b], f.right[a:b])
    return int(lv[0, 0]) if X.shape[0] == 1 else lv[0]


def _is_record(rows):
    return isinstance(rows, Mapping) and all(np.ndim(v) == 0 for v in rows.values())
