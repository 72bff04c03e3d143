"""Typed, role-tagged tabular data.

A :class:`Dataset` is an immutable column store. Numeric cells are float64,
categorical cells are level indices (int64). Every column has a parallel
boolean missing mask; masked numeric cells hold NaN and masked categorical
cells hold -1.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    BadFoldCount,
    DuplicateColumn,
    MissingColumn,
    NonBinaryTarget,
    SchemaError,
    UnknownFeature,
    UnknownLevel,
)

OTHER = "other"


class ColumnRole(str, Enum):
    PROTECTED = "protected"
    TRADITIONAL = "traditional"
    ALTERNATIVE = "alternative"
    TARGET = "target"
    EXCLUDED = "excluded"


@dataclass(frozen=True)
class Numeric:
    def to_json(self):
        return "numeric"


@dataclass(frozen=True)
class Categorical:
    """Categorical type. The level list always ends with (or contains) ``"other"``."""

    levels: tuple[str, ...]

    def __post_init__(self):
        levels = tuple(str(v) for v in self.levels)
        if len(set(levels)) != len(levels):
            raise SchemaError(f"duplicate categorical levels: {levels}")
        if OTHER not in levels:
            levels = levels + (OTHER,)
        object.__setattr__(self, "levels", levels)

    @property
    def other_index(self) -> int:
        return self.levels.index(OTHER)

    def index(self, level: str) -> int:
        try:
            return self.levels.index(level)
        except ValueError:
            raise UnknownLevel(f"unknown level {level!r}", level=level) from None

    def to_json(self):
        return {"categorical": list(self.levels)}


ColumnType = Numeric | Categorical


@dataclass(frozen=True)
class Column:
    name: str
    type: ColumnType
    role: ColumnRole

    @property
    def is_categorical(self) -> bool:
        return isinstance(self.type, Categorical)


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        seen = set()
        for col in self.columns:
            if col.name in seen:
                raise DuplicateColumn(f"duplicate column {col.name!r}", name=col.name)
            seen.add(col.name)
        targets = [c.name for c in self.columns if c.role is ColumnRole.TARGET]
        if len(targets) != 1:
            raise SchemaError(f"schema needs exactly one target column, found {targets}")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def target(self) -> str:
        return next(c.name for c in self.columns if c.role is ColumnRole.TARGET)

    def __contains__(self, name: str) -> bool:
        return any(c.name == name for c in self.columns)

    def __getitem__(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise UnknownFeature(f"no column named {name!r}", name=name)

    def by_role(self, *roles: ColumnRole) -> list[str]:
        return [c.name for c in self.columns if c.role in roles]

    def with_roles(self, roles: Mapping[str, ColumnRole]) -> "Schema":
        cols = []
        for c in self.columns:
            role = roles.get(c.name, c.role)
            cols.append(Column(c.name, c.type, ColumnRole(role)))
        return Schema(tuple(cols))

    # -- JSON ---------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "columns": [
                {"name": c.name, "type": c.type.to_json(), "role": c.role.value}
                for c in self.columns
            ]
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "Schema":
        if not isinstance(obj, Mapping) or set(obj) != {"columns"}:
            raise SchemaError("schema must be an object with a single 'columns' key")
        cols = []
        for entry in obj["columns"]:
            extra = set(entry) - {"name", "type", "role"}
            if extra:
                raise SchemaError(f"unknown schema keys {sorted(extra)}")
            raw_type = entry.get("type", "numeric")
            if raw_type == "numeric":
                ctype: ColumnType = Numeric()
            elif isinstance(raw_type, Mapping) and "categorical" in raw_type:
                ctype = Categorical(tuple(raw_type["categorical"]))
            else:
                raise SchemaError(f"bad column type {raw_type!r} for {entry.get('name')!r}")
            try:
                role = ColumnRole(entry["role"])
            except (KeyError, ValueError):
                raise SchemaError(f"bad role for column {entry.get('name')!r}") from None
            cols.append(Column(str(entry["name"]), ctype, role))
        return cls(tuple(cols))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "Schema":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


class Dataset:
    """Immutable table of typed columns with per-cell missing masks."""

    def __init__(
        self,
        schema: Schema,
        values: Mapping[str, np.ndarray],
        missing: Mapping[str, np.ndarray] | None = None,
    ):
        missing = missing or {}
        n = None
        self._values: dict[str, np.ndarray] = {}
        self._missing: dict[str, np.ndarray] = {}
        for col in schema.columns:
            if col.name not in values:
                raise MissingColumn(f"missing column {col.name!r}", name=col.name)
            v = np.asarray(values[col.name])
            if v.ndim != 1:
                raise SchemaError(f"column {col.name!r} must be one-dimensional")
            n = len(v) if n is None else n
            if len(v) != n:
                raise SchemaError(f"column {col.name!r} has {len(v)} rows, expected {n}")
            if col.is_categorical:
                v = v.astype(np.int64, copy=True)
                m = np.asarray(missing.get(col.name, v < 0), dtype=bool).copy()
                v[m] = -1
                if np.any(~m & ((v < 0) | (v >= len(col.type.levels)))):
                    raise SchemaError(f"level index out of range in column {col.name!r}")
            else:
                v = v.astype(np.float64, copy=True)
                m = np.asarray(missing.get(col.name, np.isnan(v)), dtype=bool) | np.isnan(v)
                v[m] = np.nan
            self._values[col.name] = _readonly(v)
            self._missing[col.name] = _readonly(m)
        self.schema = schema
        self.n_rows = int(n or 0)
        y = self._values[schema.target]
        if schema[schema.target].is_categorical:
            raise NonBinaryTarget("target column must be numeric 0/1")
        if self._missing[schema.target].any() or not np.all((y == 0) | (y == 1)):
            raise NonBinaryTarget(f"target {schema.target!r} must be 0/1 with no missing values")

    def __len__(self) -> int:
        return self.n_rows

    def __repr__(self) -> str:
        return f"Dataset(n_rows={self.n_rows}, columns={self.schema.names})"

    @classmethod
    def from_columns(cls, schema: Schema, columns: Mapping[str, Sequence]) -> "Dataset":
        """Build from raw Python/numpy columns.

        Categorical columns may be given as level strings (None = missing,
        unknown strings map to ``"other"``); numeric columns use NaN/None for
        missing.
        """
        values, missing = {}, {}
        for col in schema.columns:
            if col.name not in columns:
                raise MissingColumn(f"missing column {col.name!r}", name=col.name)
            raw = columns[col.name]
            if col.is_categorical:
                arr = np.asarray(raw, dtype=object)
                if arr.size and all(isinstance(x, (int, np.integer)) for x in arr):
                    idx = arr.astype(np.int64)
                    values[col.name], missing[col.name] = idx, idx < 0
                    continue
                lookup = {lv: i for i, lv in enumerate(col.type.levels)}
                other = col.type.other_index
                mask = np.array([x is None or x == "" for x in arr], dtype=bool)
                idx = np.array(
                    [-1 if m else lookup.get(str(x), other) for x, m in zip(arr, mask)],
                    dtype=np.int64,
                )
                values[col.name], missing[col.name] = idx, mask
            else:
                arr = np.array([np.nan if x is None else x for x in raw], dtype=np.float64)
                values[col.name], missing[col.name] = arr, np.isnan(arr)
        return cls(schema, values, missing)

    # -- access -----------------------------------------------------------
    def values(self, name: str) -> np.ndarray:
        try:
            return self._values[name]
        except KeyError:
            raise UnknownFeature(f"no column named {name!r}", name=name) from None

    def missing(self, name: str) -> np.ndarray:
        self.values(name)
        return self._missing[name]

    @property
    def target(self) -> np.ndarray:
        return self._values[self.schema.target]

    def labels(self, name: str) -> np.ndarray:
        """Level names of a categorical column as an object array (None = missing)."""
        levels = np.array(self.schema[name].type.levels + (None,), dtype=object)
        return levels[self.values(name)]

    # -- derivation (each returns a new Dataset) ---------------------------
    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.schema,
            {k: v[idx] for k, v in self._values.items()},
            {k: m[idx] for k, m in self._missing.items()},
        )

    def with_schema(self, schema: Schema) -> "Dataset":
        """Re-tag roles; the column types must be unchanged."""
        for col in schema.columns:
            if col.name in self.schema and self.schema[col.name].type != col.type:
                raise SchemaError(f"type change for column {col.name!r}")
        return Dataset(schema, self._values, self._missing)

    def with_column(self, column: Column, values, missing=None) -> "Dataset":
        cols = tuple(c for c in self.schema.columns if c.name != column.name) + (column,)
        vals = dict(self._values)
        miss = dict(self._missing)
        vals[column.name] = np.asarray(values)
        if missing is not None:
            miss[column.name] = np.asarray(missing, dtype=bool)
        else:
            miss.pop(column.name, None)
        return Dataset(Schema(cols), vals, miss)

    def with_values(self, name: str, values, missing=None) -> "Dataset":
        col = self.schema[name]
        vals = dict(self._values)
        miss = dict(self._missing)
        vals[name] = np.asarray(values)
        if missing is None:
            miss.pop(name, None)
        else:
            miss[name] = np.asarray(missing, dtype=bool)
        return Dataset(self.schema, vals, miss)

    def with_level(self, name: str, level: str) -> "Dataset":
        """Set every cell of a categorical column to ``level``."""
        col = self.schema[name]
        if not col.is_categorical:
            raise SchemaError(f"column {name!r} is not categorical")
        idx = col.type.index(level)
        return self.with_values(name, np.full(self.n_rows, idx, dtype=np.int64),
                                np.zeros(self.n_rows, dtype=bool))

    def drop(self, names: Iterable[str]) -> "Dataset":
        names = set(names)
        cols = tuple(c for c in self.schema.columns if c.name not in names)
        return Dataset(Schema(cols), self._values, self._missing)

    # -- CSV ----------------------------------------------------------------
    def to_csv(self, path) -> None:
        cols = self.schema.columns
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([c.name for c in cols])
            rendered = []
            for c in cols:
                v, m = self._values[c.name], self._missing[c.name]
                if c.is_categorical:
                    levels = c.type.levels
                    rendered.append(["" if mm else levels[i] for i, mm in zip(v, m)])
                else:
                    rendered.append(["" if mm else repr(float(x)) for x, mm in zip(v, m)])
            writer.writerows(zip(*rendered))


def _parse_float(cell: str) -> float:
    try:
        x = float(cell)
    except ValueError:
        return math.nan
    return x if math.isfinite(x) else math.nan


def load_csv(path, schema: Schema) -> Dataset:
    """Parse a header-first CSV against ``schema``.

    Unparseable numeric cells become missing; categorical cells outside the
    level list map to ``"other"``; columns absent from the schema are ignored.
    """
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn("empty CSV file") from None
        rows = list(reader)
    header = [h.strip() for h in header]
    positions: dict[str, int] = {}
    for i, name in enumerate(header):
        if name in positions:
            raise DuplicateColumn(f"duplicate CSV column {name!r}", name=name)
        positions[name] = i
    for col in schema.columns:
        if col.name not in positions:
            raise MissingColumn(f"missing column {col.name!r}", name=col.name)

    values, missing = {}, {}
    for col in schema.columns:
        j = positions[col.name]
        cells = [r[j].strip() if j < len(r) else "" for r in rows]
        if col.is_categorical:
            lookup = {lv: i for i, lv in enumerate(col.type.levels)}
            other = col.type.other_index
            mask = np.array([c == "" for c in cells], dtype=bool)
            values[col.name] = np.array(
                [-1 if c == "" else lookup.get(c, other) for c in cells], dtype=np.int64
            )
            missing[col.name] = mask
        else:
            arr = np.array([_parse_float(c) if c else math.nan for c in cells], dtype=np.float64)
            values[col.name] = arr
            missing[col.name] = np.isnan(arr)
    return Dataset(schema, values, missing)


def _test_size(n: int, test_fraction: float) -> int:
    return int(math.floor(n * test_fraction + 0.5))


def split_indices(n: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if n < 2:
        raise ValueError("split needs at least two rows")
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    perm = np.random.default_rng(seed).permutation(n)
    n_test = _test_size(n, test_fraction)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def split(data: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded train/test partition; ``|test| = round(n * test_fraction)``."""
    train_idx, test_idx = split_indices(data.n_rows, test_fraction, seed)
    return data.take(train_idx), data.take(test_idx)


def kfold_indices(n: int, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    if k < 2 or k > n:
        raise BadFoldCount(f"k={k} must satisfy 2 <= k <= n={n}", k=k, n=n)
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(perm, k)
    out = []
    for i, val in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != i])
        out.append((np.sort(train), np.sort(val)))
    return out


def kfold(data: Dataset, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded k-fold (train, validation) index partitions; fold sizes differ by at most one."""
    return kfold_indices(data.n_rows, k, seed)
