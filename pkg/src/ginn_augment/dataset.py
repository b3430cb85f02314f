"""Tabular data handling: schema, CSV I/O, encoding, masks, splits, MCAR damage.

Rows are encoded into a matrix in [0, 1]: numerical attributes are min-max
scaled and categorical attributes become one-hot groups. Missingness is
tracked per original attribute, so a dropped categorical attribute drops its
whole one-hot group. Missing cells are stored as 0 and flagged in the mask.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

MISSING_TOKENS = ("", "NA")

NUMERICAL = "numerical"
CATEGORICAL = "categorical"
LABEL = "label"


class SchemaError(ValueError):
    pass


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    categories: tuple[str, ...] = ()


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]
    name: str = ""

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("column names must be unique")
        kinds = [c.kind for c in self.columns]
        if kinds.count(LABEL) != 1:
            raise SchemaError("schema needs exactly one label column")
        for c in self.columns:
            if c.kind not in (NUMERICAL, CATEGORICAL, LABEL):
                raise SchemaError(f"column {c.name!r}: unknown kind {c.kind!r}")
            if c.kind in (CATEGORICAL, LABEL):
                if len(set(c.categories)) != len(c.categories):
                    raise SchemaError(f"column {c.name!r}: duplicate categories")
            if c.kind == CATEGORICAL and len(c.categories) < 2:
                raise SchemaError(f"column {c.name!r}: needs at least 2 categories")

    @property
    def label_index(self) -> int:
        return next(i for i, c in enumerate(self.columns) if c.kind == LABEL)

    @property
    def label(self) -> Column:
        return self.columns[self.label_index]

    @property
    def features(self) -> list[Column]:
        """Non-label columns in file order."""
        return [c for c in self.columns if c.kind != LABEL]

    @property
    def n_numerical(self) -> int:
        return sum(c.kind == NUMERICAL for c in self.columns)

    @property
    def n_categorical(self) -> int:
        return sum(c.kind == CATEGORICAL for c in self.columns)

    @classmethod
    def from_dict(cls, doc: dict) -> "Schema":
        allowed = {"name", "columns"}
        extra = set(doc) - allowed
        if extra:
            raise SchemaError(f"unknown schema keys: {sorted(extra)}")
        cols = []
        for c in doc["columns"]:
            cols.append(Column(c["name"], c["kind"], tuple(str(v) for v in c.get("categories", ()))))
        return cls(tuple(cols), doc.get("name", ""))

    def to_dict(self) -> dict:
        cols = []
        for c in self.columns:
            entry = {"name": c.name, "kind": c.kind}
            if c.kind != NUMERICAL:
                entry["categories"] = list(c.categories)
            cols.append(entry)
        return {"name": self.name, "columns": cols}

    @classmethod
    def load(cls, path) -> "Schema":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class TabularDataset:
    """Feature rows plus optional labels.

    ``rows[i][k]`` is the value of the k-th feature column (a float for
    numerical columns, a category token for categorical ones, ``None`` when
    missing). ``labels[i]`` is ``None`` for unlabeled rows.
    """

    schema: Schema
    rows: list[list]
    labels: list[Optional[str]]
    raw: Optional[list[list[str]]] = None

    def __post_init__(self):
        if len(self.rows) != len(self.labels):
            raise ValueError("rows and labels differ in length")

    def __len__(self):
        return len(self.rows)

    @property
    def labeled_indices(self) -> np.ndarray:
        return np.array([i for i, y in enumerate(self.labels) if y is not None], dtype=int)

    def subset(self, indices: Sequence[int], keep_labels: bool = True) -> "TabularDataset":
        idx = [int(i) for i in indices]
        labels = [self.labels[i] if keep_labels else None for i in idx]
        raw = [self.raw[i] for i in idx] if self.raw is not None else None
        return TabularDataset(self.schema, [list(self.rows[i]) for i in idx], labels, raw)


def _parse_cell(col: Column, token: str, lineno: int):
    token = token.strip()
    if token in MISSING_TOKENS:
        return None
    if col.kind == NUMERICAL:
        try:
            value = float(token)
        except ValueError:
            raise ParseError(f"line {lineno}: column {col.name!r}: not a number: {token!r}") from None
        if not math.isfinite(value):
            raise ParseError(f"line {lineno}: column {col.name!r}: non-finite value")
        return value
    if token not in col.categories:
        raise SchemaError(f"line {lineno}: column {col.name!r}: unknown category {token!r}")
    return token


def load_csv(path, schema: Schema) -> TabularDataset:
    """Read a CSV with a header row matching ``schema`` column names."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        expected = [c.name for c in schema.columns]
        if header != expected:
            raise SchemaError(f"{path}: header {header} does not match schema {expected}")
        li = schema.label_index
        rows, labels, raw = [], [], []
        for lineno, fields in enumerate(reader, start=2):
            if not fields:
                continue
            if len(fields) != len(expected):
                raise ParseError(
                    f"{path}: line {lineno}: expected {len(expected)} fields, got {len(fields)}"
                )
            values = [_parse_cell(c, f, lineno) for c, f in zip(schema.columns, fields)]
            labels.append(values[li])
            rows.append(values[:li] + values[li + 1:])
            raw.append(list(fields))
    return TabularDataset(schema, rows, labels, raw)


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, data: TabularDataset, extra: Optional[dict[str, Sequence]] = None) -> None:
    """Write rows in schema column order; ``extra`` appends named columns."""
    schema = data.schema
    li = schema.label_index
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([c.name for c in schema.columns] + list(extra))
        for i, (row, label) in enumerate(zip(data.rows, data.labels)):
            cells = [format_value(v) for v in row]
            cells.insert(li, format_value(label))
            cells += [format_value(col[i]) for col in extra.values()]
            w.writerow(cells)


# --- encoding ------------------------------------------------------------


@dataclass(frozen=True)
class EncodedColumn:
    attribute: int  # index into schema.features
    role: str  # NUMERICAL or "one-hot"
    category: int = -1


@dataclass
class Layout:
    """Column map and scaling shared by every matrix encoded the same way."""

    schema: Schema
    columns: list[EncodedColumn]
    groups: list[np.ndarray]  # encoded column indices per attribute
    scaling: dict[int, tuple[float, float]]  # attribute -> (min, max)

    @property
    def d(self) -> int:
        return len(self.columns)

    @property
    def n_attributes(self) -> int:
        return len(self.groups)

    @property
    def numerical_columns(self) -> np.ndarray:
        return np.array([j for j, c in enumerate(self.columns) if c.role == NUMERICAL], dtype=int)

    @property
    def categorical_columns(self) -> np.ndarray:
        return np.array([j for j, c in enumerate(self.columns) if c.role != NUMERICAL], dtype=int)

    def degenerate(self, attribute: int) -> bool:
        lo, hi = self.scaling[attribute]
        return hi == lo

    def expand(self, attr_mask: np.ndarray) -> np.ndarray:
        """Broadcast an (n, A) attribute mask to the (n, d) encoded columns."""
        owner = np.array([c.attribute for c in self.columns], dtype=int)
        return attr_mask[:, owner]

    def attribute_mask(self, mask: np.ndarray) -> np.ndarray:
        """Collapse an (n, d) mask to (n, A) using the first column of each group."""
        firsts = np.array([g[0] for g in self.groups], dtype=int)
        return mask[:, firsts]

    def to_dict(self) -> dict:
        return {
            "schema": self.schema.to_dict(),
            "scaling": {str(k): list(v) for k, v in self.scaling.items()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Layout":
        schema = Schema.from_dict(doc["schema"])
        scaling = {int(k): (float(v[0]), float(v[1])) for k, v in doc["scaling"].items()}
        return build_layout(schema, scaling)


@dataclass
class EncodedMatrix:
    values: np.ndarray
    layout: Layout

    @property
    def shape(self):
        return self.values.shape


def build_layout(schema: Schema, scaling: dict[int, tuple[float, float]]) -> Layout:
    columns, groups = [], []
    for a, col in enumerate(schema.features):
        start = len(columns)
        if col.kind == NUMERICAL:
            columns.append(EncodedColumn(a, NUMERICAL))
        else:
            columns.extend(EncodedColumn(a, "one-hot", k) for k in range(len(col.categories)))
        groups.append(np.arange(start, len(columns)))
    return Layout(schema, columns, groups, dict(scaling))


def fit_layout(data: TabularDataset, fit_rows: Optional[Sequence[int]] = None) -> Layout:
    """Compute min-max scaling from ``fit_rows`` (all rows by default)."""
    feats = data.schema.features
    if not feats:
        raise SchemaError("schema has no feature columns")
    idx = range(len(data)) if fit_rows is None else fit_rows
    scaling = {}
    for a, col in enumerate(feats):
        if col.kind != NUMERICAL:
            continue
        vals = [data.rows[i][a] for i in idx if data.rows[i][a] is not None]
        if not vals:
            raise SchemaError(f"column {col.name!r} has no observed values to scale")
        scaling[a] = (float(min(vals)), float(max(vals)))
    return build_layout(data.schema, scaling)


def transform(data: TabularDataset, layout: Layout) -> tuple[EncodedMatrix, np.ndarray]:
    """Encode with a fixed layout; values outside the fitted range are clamped."""
    n, d = len(data), layout.d
    values = np.zeros((n, d))
    mask = np.zeros((n, d))
    for a, col in enumerate(layout.schema.features):
        g = layout.groups[a]
        if col.kind == NUMERICAL:
            lo, hi = layout.scaling[a]
            j = g[0]
            for i, row in enumerate(data.rows):
                v = row[a]
                if v is None:
                    continue
                values[i, j] = 0.5 if hi == lo else min(max((v - lo) / (hi - lo), 0.0), 1.0)
                mask[i, j] = 1.0
        else:
            lookup = {tok: k for k, tok in enumerate(col.categories)}
            for i, row in enumerate(data.rows):
                v = row[a]
                if v is None:
                    continue
                values[i, g[lookup[v]]] = 1.0
                mask[i, g] = 1.0
    return EncodedMatrix(values, layout), mask


def encode(data: TabularDataset, fit_rows: Optional[Sequence[int]] = None
           ) -> tuple[EncodedMatrix, np.ndarray]:
    """Fit scaling on ``fit_rows`` and encode every row of ``data``."""
    layout = fit_layout(data, fit_rows)
    return transform(data, layout)


def decode(matrix: EncodedMatrix, labels: Optional[Sequence[Optional[str]]] = None,
           mask: Optional[np.ndarray] = None) -> TabularDataset:
    """Invert the encoding. One-hot groups are resolved by argmax, lowest index on ties.

    When ``mask`` is given, attributes it marks missing decode to ``None``.
    """
    layout = matrix.layout
    x = matrix.values
    n = x.shape[0]
    feats = layout.schema.features
    rows = [[None] * len(feats) for _ in range(n)]
    observed = layout.attribute_mask(mask) > 0 if mask is not None else np.ones((n, len(feats)), bool)
    for a, col in enumerate(feats):
        g = layout.groups[a]
        if col.kind == NUMERICAL:
            lo, hi = layout.scaling[a]
            vals = np.full(n, lo) if hi == lo else lo + x[:, g[0]] * (hi - lo)
            for i in range(n):
                if observed[i, a]:
                    rows[i][a] = float(vals[i])
        else:
            # np.argmax returns the first maximal index
            picks = np.argmax(x[:, g], axis=1)
            for i in range(n):
                if observed[i, a]:
                    rows[i][a] = col.categories[picks[i]]
    labels = list(labels) if labels is not None else [None] * n
    return TabularDataset(layout.schema, rows, labels)


def compute_global(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Observed-entry mean of every encoded column."""
    counts = mask.sum(axis=0)
    if np.any(counts == 0):
        missing = np.flatnonzero(counts == 0).tolist()
        raise ValueError(f"columns {missing} have no observed entries")
    return (values * mask).sum(axis=0) / counts


# --- splits and damage ---------------------------------------------------


@dataclass(frozen=True)
class SplitPlan:
    train_indices: np.ndarray
    test_indices: np.ndarray
    labeled_indices: np.ndarray
    seed: int

    @property
    def unlabeled_indices(self) -> np.ndarray:
        return np.setdiff1d(self.train_indices, self.labeled_indices)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def make_split(n: int, train_frac: float = 0.7, label_frac: float = 0.1, seed: int = 0) -> SplitPlan:
    if not 0 < train_frac < 1:
        raise ValueError("train_frac must lie in (0, 1)")
    if not 0 < label_frac <= 1:
        raise ValueError("label_frac must lie in (0, 1]")
    n_train = _round_half_up(train_frac * n)
    n_labeled = _round_half_up(label_frac * n_train)
    if n_train >= n or n_labeled < 1:
        raise ValueError(f"n={n} too small for a split with a test set and labeled rows")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    train, test = perm[:n_train], perm[n_train:]
    # labeled rows are the first block of the already shuffled training part
    labeled = train[:n_labeled]
    return SplitPlan(np.sort(train), np.sort(test), np.sort(labeled), seed)


def apply_mcar(matrix: EncodedMatrix, mask: np.ndarray, rate: float, seed) -> tuple[EncodedMatrix, np.ndarray]:
    """Remove ``floor(rate * A)`` observed attributes per row, keeping at least one.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if not 0 <= rate < 1:
        raise ValueError("rate must lie in [0, 1)")
    layout = matrix.layout
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    A = layout.n_attributes
    k_target = int(math.floor(rate * A + 1e-12))
    attr = layout.attribute_mask(mask).copy()
    if k_target > 0:
        for i in range(attr.shape[0]):
            observed = np.flatnonzero(attr[i] > 0)
            k = min(k_target, len(observed) - 1)
            if k <= 0:
                continue
            drop = rng.choice(observed, size=k, replace=False)
            attr[i, drop] = 0.0
    new_mask = layout.expand(attr) * mask
    return EncodedMatrix(matrix.values * new_mask, layout), new_mask


def load_builtin(name: str, data_dir=None) -> TabularDataset:
    from .datasets import resolve

    csv_path, schema_path = resolve(name, data_dir)
    return load_csv(csv_path, Schema.load(schema_path))
