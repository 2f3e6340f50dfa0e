"""Column-typed in-memory tables, CSV ingestion and train/test splitting."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._rng import generator

NUMERIC = "numeric"
CATEGORICAL = "categorical"
DATE = "date"
RESPONSE = "response"
KINDS = (NUMERIC, CATEGORICAL, DATE, RESPONSE)

OTHER_LEVEL = "<other>"
MISSING_TOKENS = frozenset({"", "NA", "NaN", "nan", "null", "NULL"})


class DatasetError(ValueError):
    pass


class ParseError(DatasetError):
    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class SchemaError(DatasetError):
    pass


class DegenerateSplitError(DatasetError):
    pass


@dataclass(frozen=True)
class ColumnSchema:
    """Name, kind and (for categorical data) ordered levels of one column.

    ``response_type`` only matters for the response column: ``"numeric"``
    for regression targets, ``"categorical"`` for class labels.
    """

    name: str
    kind: str
    levels: tuple = ()
    response_type: str = NUMERIC

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))
        if self.kind not in KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.response_type not in (NUMERIC, CATEGORICAL):
            raise SchemaError(f"column {self.name!r}: bad response_type {self.response_type!r}")
        if len(set(self.levels)) != len(self.levels):
            raise SchemaError(f"column {self.name!r}: duplicate levels")
        if self.levels and not self.is_categorical:
            raise SchemaError(f"column {self.name!r}: levels given for a non-categorical column")
        if OTHER_LEVEL in self.levels:
            raise SchemaError(f"column {self.name!r}: {OTHER_LEVEL!r} is reserved")

    @property
    def is_categorical(self):
        return self.kind == CATEGORICAL or (
            self.kind == RESPONSE and self.response_type == CATEGORICAL)

    @property
    def is_numeric(self):
        return self.kind == NUMERIC or (
            self.kind == RESPONSE and self.response_type == NUMERIC)

    def to_dict(self):
        d = {"name": self.name, "kind": self.kind}
        if self.levels:
            d["levels"] = list(self.levels)
        if self.kind == RESPONSE:
            d["response_type"] = self.response_type
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], d["kind"], tuple(d.get("levels", ())),
                   d.get("response_type", NUMERIC))


def load_schema(path) -> list[ColumnSchema]:
    """Read a JSON schema file.

    Two layouts are accepted: ``{"columns": [{"name": ..., "kind": ...}, ...]}``
    or a flat mapping ``{"x": "numeric", "y": "response", ...}``. In the flat
    form ``"response:categorical"`` declares a class-label response.
    """
    raw = json.loads(Path(path).read_text())
    if isinstance(raw, dict) and "columns" in raw:
        return [ColumnSchema.from_dict(c) for c in raw["columns"]]
    out = []
    for name, kind in raw.items():
        if kind == "response:categorical":
            out.append(ColumnSchema(name, RESPONSE, response_type=CATEGORICAL))
        else:
            out.append(ColumnSchema(name, kind))
    return out


def parse_date(value) -> np.datetime64:
    try:
        d = np.datetime64(str(value).strip(), "D")
    except ValueError as exc:
        raise ParseError(f"invalid ISO date {value!r}") from exc
    if np.isnat(d):
        raise ParseError(f"invalid ISO date {value!r}")
    return d


class Dataset:
    """An immutable column store with exactly one response column.

    Numeric columns are float64, categorical columns are int64 codes into
    their schema levels, date columns are ``datetime64[D]``.
    """

    def __init__(self, schema: Sequence[ColumnSchema], columns: Mapping[str, np.ndarray]):
        schema = list(schema)
        names = [c.name for c in schema]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column names")
        responses = [c for c in schema if c.kind == RESPONSE]
        if len(responses) != 1:
            raise SchemaError(f"expected exactly one response column, got {len(responses)}")
        if set(columns) != set(names):
            raise SchemaError("columns do not match schema")
        lengths = {len(columns[n]) for n in names}
        if len(lengths) > 1:
            raise SchemaError("columns have unequal lengths")
        self._n = lengths.pop() if lengths else 0
        cols = {}
        for c in schema:
            v = np.asarray(columns[c.name])
            if c.is_categorical:
                v = v.astype(np.int64)
                if self._n and not c.levels:
                    raise SchemaError(f"categorical column {c.name!r} has no levels")
                if self._n and (v.min() < 0 or v.max() >= len(c.levels)):
                    raise SchemaError(f"column {c.name!r}: code outside levels")
            elif c.kind == DATE:
                v = v.astype("datetime64[D]")
            else:
                v = v.astype(np.float64)
                if np.isnan(v).any():
                    raise SchemaError(f"column {c.name!r} contains missing values")
            v.setflags(write=False)
            cols[c.name] = v
        self._schema = tuple(schema)
        self._cols = cols

    # construction helpers
    @classmethod
    def from_columns(cls, data: Mapping[str, Iterable], response: str,
                     kinds: Mapping[str, str] | None = None,
                     levels: Mapping[str, Sequence[str]] | None = None) -> "Dataset":
        """Build a Dataset from raw column values.

        Kinds are inferred when not given: string values become categorical
        (levels in first-appearance order), ``datetime64`` becomes date and
        anything else numeric. A string-valued response is a class label.
        """
        kinds = dict(kinds or {})
        levels = dict(levels or {})
        schema, cols = [], {}
        for name, values in data.items():
            arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values)
            kind = kinds.get(name)
            if kind is None:
                if arr.dtype.kind in "OUS":
                    kind = CATEGORICAL
                elif arr.dtype.kind == "M":
                    kind = DATE
                else:
                    kind = NUMERIC
            if name == response:
                rtype = CATEGORICAL if kind == CATEGORICAL else NUMERIC
                kind = RESPONSE
            else:
                rtype = NUMERIC
            if kind == CATEGORICAL or (kind == RESPONSE and rtype == CATEGORICAL):
                labels = [str(v) for v in arr]
                lv = list(levels.get(name) or dict.fromkeys(labels))
                index = {l: i for i, l in enumerate(lv)}
                try:
                    codes = np.array([index[l] for l in labels], dtype=np.int64)
                except KeyError as exc:
                    raise SchemaError(f"column {name!r}: unknown level {exc.args[0]!r}") from None
                schema.append(ColumnSchema(name, kind, tuple(lv), rtype))
                cols[name] = codes
            else:
                schema.append(ColumnSchema(name, kind, (), rtype))
                cols[name] = arr
        if response not in cols:
            raise SchemaError(f"response column {response!r} not present")
        return cls(schema, cols)

    # accessors
    @property
    def n(self) -> int:
        return self._n

    def __len__(self):
        return self._n

    @property
    def schema(self) -> tuple[ColumnSchema, ...]:
        return self._schema

    @property
    def names(self) -> list[str]:
        return [c.name for c in self._schema]

    @property
    def response(self) -> str:
        return next(c.name for c in self._schema if c.kind == RESPONSE)

    @property
    def features(self) -> list[str]:
        return [c.name for c in self._schema if c.kind != RESPONSE]

    def column_schema(self, name) -> ColumnSchema:
        for c in self._schema:
            if c.name == name:
                return c
        raise KeyError(name)

    def __contains__(self, name):
        return name in self._cols

    def __getitem__(self, name) -> np.ndarray:
        return self._cols[name]

    def labels(self, name) -> np.ndarray:
        """Level names of a categorical column, row by row."""
        c = self.column_schema(name)
        if not c.is_categorical:
            return self._cols[name]
        return np.asarray(c.levels + (OTHER_LEVEL,), dtype=object)[self._cols[name]]

    # derivations
    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self._schema, {k: v[idx] for k, v in self._cols.items()})

    def select(self, features: Sequence[str], response: str) -> "Dataset":
        """Project to ``features`` plus ``response``, re-assigning the response role."""
        schema, cols = [], {}
        for name in list(features) + [response]:
            c = self.column_schema(name)
            if name == response:
                if c.kind == DATE:
                    raise SchemaError("a date column cannot be the response")
                rtype = CATEGORICAL if c.is_categorical else NUMERIC
                schema.append(ColumnSchema(name, RESPONSE, c.levels, rtype))
            elif c.kind == RESPONSE:
                schema.append(ColumnSchema(name, CATEGORICAL if c.is_categorical else NUMERIC,
                                           c.levels))
            else:
                schema.append(c)
            cols[name] = self._cols[name]
        if len(set(features) | {response}) != len(features) + 1:
            raise SchemaError("response listed among features or duplicate feature")
        return Dataset(schema, cols)

    def with_column(self, name: str, values, kind: str = NUMERIC,
                    levels: Sequence[str] = ()) -> "Dataset":
        """Return a copy with one extra feature column (codes for categorical)."""
        if name in self._cols:
            raise SchemaError(f"column {name!r} already exists")
        schema = list(self._schema) + [ColumnSchema(name, kind, tuple(levels))]
        cols = dict(self._cols)
        cols[name] = np.asarray(values)
        return Dataset(schema, cols)

    def without(self, names: Iterable[str]) -> "Dataset":
        drop = set(names)
        if self.response in drop:
            raise SchemaError("cannot drop the response column")
        schema = [c for c in self._schema if c.name not in drop]
        return Dataset(schema, {c.name: self._cols[c.name] for c in schema})

    def cells(self, name) -> list[str]:
        """Cell values of a column rendered as CSV text."""
        c = self.column_schema(name)
        if c.is_categorical:
            return [str(v) for v in self.labels(name)]
        if c.kind == DATE:
            return [str(v) for v in self._cols[name]]
        return [repr(float(v)) for v in self._cols[name]]

    def write_csv(self, path) -> None:
        cols = [self.cells(n) for n in self.names]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.names)
            w.writerows(zip(*cols))

    def __repr__(self):
        return f"Dataset(n={self._n}, columns={self.names}, response={self.response!r})"


def load_csv(path, schema: Sequence[ColumnSchema], drop_missing: bool = False) -> Dataset:
    """Read an RFC-4180 CSV file against ``schema``.

    Categorical levels are discovered in file order when the schema leaves
    them empty; otherwise an unseen value is a :class:`SchemaError`. Missing
    cells are rejected unless ``drop_missing`` is set, in which case the row
    is skipped. Row numbers in errors count data rows from 1.
    """
    schema = list(schema)
    names = [c.name for c in schema]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("file has no header row") from None
        if header != names:
            raise SchemaError(f"header {header} does not match schema {names}")
        raw = {n: [] for n in names}
        for rowno, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(names):
                raise ParseError(f"expected {len(names)} fields, got {len(row)}", rowno)
            if any(v.strip() in MISSING_TOKENS for v in row):
                if drop_missing:
                    continue
                raise ParseError("missing value", rowno)
            for n, v in zip(names, row):
                raw[n].append((rowno, v))

    cols, out_schema = {}, []
    for c in schema:
        cells = raw[c.name]
        if c.is_categorical:
            fixed = bool(c.levels)
            levels = list(c.levels)
            index = {l: i for i, l in enumerate(levels)}
            codes = np.empty(len(cells), dtype=np.int64)
            for i, (rowno, v) in enumerate(cells):
                if v not in index:
                    if fixed:
                        raise SchemaError(f"row {rowno}: unknown level {v!r} in column {c.name!r}")
                    index[v] = len(levels)
                    levels.append(v)
                codes[i] = index[v]
            cols[c.name] = codes
            out_schema.append(ColumnSchema(c.name, c.kind, tuple(levels), c.response_type))
        elif c.kind == DATE:
            vals = np.empty(len(cells), dtype="datetime64[D]")
            for i, (rowno, v) in enumerate(cells):
                try:
                    vals[i] = parse_date(v)
                except ParseError as exc:
                    raise ParseError(str(exc), rowno) from None
            cols[c.name] = vals
            out_schema.append(c)
        else:
            vals = np.empty(len(cells), dtype=np.float64)
            for i, (rowno, v) in enumerate(cells):
                try:
                    vals[i] = float(v)
                except ValueError:
                    raise ParseError(f"not a number: {v!r} in column {c.name!r}", rowno) from None
                if not math.isfinite(vals[i]):
                    raise ParseError(f"non-finite value in column {c.name!r}", rowno)
            cols[c.name] = vals
            out_schema.append(c)
    return Dataset(out_schema, cols)


def quarter_dummies(dates) -> np.ndarray:
    """Indicators for calendar quarters 2, 3 and 4 (quarter 1 is all zeros).

    >>> quarter_dummies(["2014-08-01"]).tolist()
    [[0, 1, 0]]
    """
    d = np.asarray(dates)
    if d.dtype.kind != "M":
        d = np.array([parse_date(v) for v in d], dtype="datetime64[D]")
    if np.isnat(d).any():
        raise ParseError("invalid date")
    month = d.astype("datetime64[M]").astype(np.int64) % 12
    quarter = month // 3
    return np.stack([(quarter == q).astype(np.int64) for q in (1, 2, 3)], axis=1).reshape(-1, 3)


@dataclass(frozen=True)
class SplitSpec:
    """Either a seeded random split or an order-preserving date cutoff."""

    mode: str
    fraction: float = 0.8
    seed: int = 0
    cutoff: str | None = None
    date_column: str | None = None

    def __post_init__(self):
        if self.mode == "random":
            if not 0.0 < self.fraction < 1.0:
                raise DatasetError("fraction must lie in (0, 1)")
        elif self.mode == "temporal":
            if self.cutoff is None:
                raise DatasetError("temporal split needs a cutoff date")
            parse_date(self.cutoff)
        else:
            raise DatasetError(f"unknown split mode {self.mode!r}")

    @classmethod
    def random(cls, fraction, seed):
        return cls("random", fraction=fraction, seed=seed)

    @classmethod
    def temporal(cls, cutoff, date_column=None):
        return cls("temporal", cutoff=str(cutoff), date_column=date_column)


def split_indices(ds: Dataset, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    if spec.mode == "random":
        n_train = int(math.floor(spec.fraction * ds.n))
        perm = generator(spec.seed, "split").permutation(ds.n)
        train, test = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    else:
        col = spec.date_column
        if col is None:
            dates = [c.name for c in ds.schema if c.kind == DATE]
            if len(dates) != 1:
                raise DatasetError("temporal split needs exactly one date column or an explicit one")
            col = dates[0]
        before = ds[col] < parse_date(spec.cutoff)
        train, test = np.flatnonzero(before), np.flatnonzero(~before)
    if len(train) == 0 or len(test) == 0:
        raise DegenerateSplitError(f"split gives {len(train)} train / {len(test)} test rows")
    return train, test


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Partition ``ds`` into (train, test); rows keep their original order."""
    train, test = split_indices(ds, spec)
    return ds.take(train), ds.take(test)
