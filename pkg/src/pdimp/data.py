"""Columnar datasets: schema inference, CSV ingestion, and column summaries.

A :class:`Dataset` is an immutable column store. Continuous columns hold
float64 values, categorical columns hold int64 indices into a per-feature
level table. Categorical level order is first appearance in the input.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import CsvError, UnknownFeatureError, ValidationError

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
_KINDS = (CONTINUOUS, CATEGORICAL)


@dataclass(frozen=True)
class FeatureSchema:
    """Kind and metadata of one column."""

    name: str
    kind: str
    levels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValidationError(f"unknown feature kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if self.levels is None:
                raise ValidationError(f"categorical feature {self.name!r} needs a level table")
            if len(set(self.levels)) != len(self.levels):
                raise ValidationError(f"duplicate levels for feature {self.name!r}")
        elif self.levels is not None:
            raise ValidationError(f"continuous feature {self.name!r} must not carry levels")

    @property
    def is_continuous(self) -> bool:
        return self.kind == CONTINUOUS

    def to_json(self) -> dict:
        doc = {"name": self.name, "kind": self.kind}
        if self.kind == CATEGORICAL:
            doc["levels"] = list(self.levels)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "FeatureSchema":
        levels = doc.get("levels")
        return cls(doc["name"], doc["kind"], tuple(levels) if levels is not None else None)


class Dataset:
    """Immutable columnar table of typed features.

    ``columns`` maps feature name to a 1-D array: float64 for continuous
    features, int64 level indices for categorical ones. All columns share
    the same length and arrays are marked read-only.
    """

    def __init__(self, schema: Sequence[FeatureSchema], columns: Mapping[str, np.ndarray]):
        schema = tuple(schema)
        names = [f.name for f in schema]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate feature names in schema")
        if set(columns) != set(names):
            raise ValidationError("schema and columns name different features")

        converted: dict[str, np.ndarray] = {}
        n_rows = None
        for feat in schema:
            raw = columns[feat.name]
            if feat.is_continuous:
                col = np.asarray(raw, dtype=np.float64)
                if col.ndim != 1:
                    raise ValidationError(f"column {feat.name!r} is not one-dimensional")
                if not np.all(np.isfinite(col)):
                    raise ValidationError(f"continuous column {feat.name!r} contains NaN/Inf")
            else:
                col = np.asarray(raw, dtype=np.int64)
                if col.ndim != 1:
                    raise ValidationError(f"column {feat.name!r} is not one-dimensional")
                if col.size and (col.min() < 0 or col.max() >= len(feat.levels)):
                    raise ValidationError(f"categorical column {feat.name!r} has out-of-range level index")
            if n_rows is None:
                n_rows = col.size
            elif col.size != n_rows:
                raise ValidationError(
                    f"column {feat.name!r} has {col.size} rows, expected {n_rows}"
                )
            col = col.copy()
            col.setflags(write=False)
            converted[feat.name] = col

        self._schema = schema
        self._columns = converted
        self._n_rows = 0 if n_rows is None else int(n_rows)

    @classmethod
    def _unchecked(cls, schema: tuple[FeatureSchema, ...], columns: dict[str, np.ndarray]) -> "Dataset":
        """Construct without validation or copying; callers guarantee invariants."""
        ds = cls.__new__(cls)
        ds._schema = schema
        ds._columns = columns
        first = next(iter(columns.values()), None)
        ds._n_rows = 0 if first is None else int(first.size)
        return ds

    @classmethod
    def from_dict(cls, data: Mapping[str, Sequence]) -> "Dataset":
        """Build a dataset from name -> values, inferring kinds from content.

        Numeric sequences become continuous columns; anything else becomes
        categorical with levels in first-appearance order.
        """
        schema = []
        columns = {}
        for name, values in data.items():
            arr = np.asarray(values)
            if arr.dtype.kind in "fiu":
                schema.append(FeatureSchema(name, CONTINUOUS))
                columns[name] = arr.astype(np.float64)
            else:
                labels = [str(v) for v in values]
                levels, index = _index_levels(labels)
                schema.append(FeatureSchema(name, CATEGORICAL, tuple(levels)))
                columns[name] = np.array([index[v] for v in labels], dtype=np.int64)
        return cls(schema, columns)

    # -- introspection -------------------------------------------------

    @property
    def schema(self) -> tuple[FeatureSchema, ...]:
        return self._schema

    @property
    def n_rows(self) -> int:
        return self._n_rows

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self._schema)

    def schema_for(self, name: str) -> FeatureSchema:
        for feat in self._schema:
            if feat.name == name:
                return feat
        raise UnknownFeatureError(f"no feature named {name!r}")

    def column(self, name: str) -> np.ndarray:
        if name not in self._columns:
            raise UnknownFeatureError(f"no feature named {name!r}")
        return self._columns[name]

    def labels(self, name: str) -> list[str]:
        """Decode a categorical column back to its level labels."""
        feat = self.schema_for(name)
        if feat.is_continuous:
            raise ValidationError(f"feature {name!r} is continuous, not categorical")
        return [feat.levels[i] for i in self._columns[name]]

    # -- derivation ----------------------------------------------------

    def select(self, names: Iterable[str]) -> "Dataset":
        names = list(names)
        schema = tuple(self.schema_for(n) for n in names)
        return Dataset._unchecked(schema, {n: self._columns[n] for n in names})

    def drop(self, name: str) -> "Dataset":
        self.schema_for(name)
        return self.select(n for n in self.feature_names if n != name)

    def split_target(self, target: str) -> tuple["Dataset", np.ndarray]:
        """Extract a named numeric column as the target, returning the rest."""
        feat = self.schema_for(target)
        if not feat.is_continuous:
            raise ValidationError(f"target column {target!r} must be numeric")
        return self.drop(target), self._columns[target]

    def take(self, indices: np.ndarray) -> "Dataset":
        cols = {}
        for name, col in self._columns.items():
            sub = col[np.asarray(indices)]
            sub.setflags(write=False)
            cols[name] = sub
        return Dataset._unchecked(self._schema, cols)

    def replace_column(self, name: str, values: np.ndarray) -> "Dataset":
        """New dataset with one column overwritten (same schema, no re-validation)."""
        self.schema_for(name)
        cols = dict(self._columns)
        values = np.asarray(values)
        values.setflags(write=False)
        cols[name] = values
        return Dataset._unchecked(self._schema, cols)

    # -- CSV -----------------------------------------------------------

    def to_csv(self, target) -> None:
        """Write RFC-4180 CSV with header; floats use shortest round-trip form."""
        if isinstance(target, (str, Path)):
            with open(target, "w", encoding="utf-8", newline="") as fh:
                self.to_csv(fh)
            return
        writer = csv.writer(target, lineterminator="\n")
        writer.writerow(self.feature_names)
        decoded = []
        for feat in self._schema:
            col = self._columns[feat.name]
            if feat.is_continuous:
                decoded.append([repr(float(v)) for v in col])
            else:
                decoded.append([feat.levels[i] for i in col])
        for row in zip(*decoded) if decoded else ():
            writer.writerow(row)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self._schema == other._schema and all(
            np.array_equal(self._columns[n], other._columns[n]) for n in self.feature_names
        )

    def __repr__(self) -> str:
        kinds = ", ".join(f"{f.name}:{f.kind[:4]}" for f in self._schema)
        return f"Dataset({self._n_rows} rows; {kinds})"


@dataclass(frozen=True)
class ColumnSummary:
    """Order statistics of one continuous column."""

    mean: float
    min: float
    max: float
    unique_values: np.ndarray
    _sorted: np.ndarray

    def quantiles(self, q):
        """Quantile(s) by linear interpolation between closest order statistics."""
        return np.quantile(self._sorted, q)


def _parses_as_finite_real(text: str) -> bool:
    try:
        value = float(text)
    except ValueError:
        return False
    return np.isfinite(value)


def _index_levels(cells: Iterable[str]) -> tuple[list[str], dict[str, int]]:
    levels: list[str] = []
    index: dict[str, int] = {}
    for cell in cells:
        if cell not in index:
            index[cell] = len(levels)
            levels.append(cell)
    return levels, index


def infer_schema(names: Sequence[str], raw_columns: Sequence[Sequence[str]]) -> list[FeatureSchema]:
    """Decide each column's kind from its text cells.

    A column is continuous iff every non-empty cell parses as a finite real;
    otherwise it is categorical with levels in first-appearance order. A
    column with no non-empty cells is categorical with an empty level table.
    """
    schema = []
    for name, cells in zip(names, raw_columns):
        non_empty = [c for c in cells if c != ""]
        if non_empty and all(_parses_as_finite_real(c) for c in non_empty):
            schema.append(FeatureSchema(name, CONTINUOUS))
        else:
            levels, _ = _index_levels(non_empty)
            schema.append(FeatureSchema(name, CATEGORICAL, tuple(levels)))
    return schema


def load_csv(source, has_header: bool = True, declared_schema: Mapping[str, str] | None = None) -> Dataset:
    """Load a comma-delimited UTF-8 table into a :class:`Dataset`.

    ``declared_schema`` maps column names to kinds ("continuous" or
    "categorical") for any subset of columns; the rest are inferred by
    cell content. Missing (empty) cells are rejected: the estimator this
    feeds assumes complete rows.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return load_csv(fh, has_header, declared_schema)
    if isinstance(source, bytes):
        return load_csv(io.StringIO(source.decode("utf-8")), has_header, declared_schema)

    reader = csv.reader(source)
    try:
        first = next(reader)
    except StopIteration:
        raise CsvError("input is empty: no header or data rows") from None

    if has_header:
        names = [c.strip() for c in first]
        rows = []
    else:
        names = [f"c{i + 1}" for i in range(len(first))]
        rows = [first]
    if len(set(names)) != len(names):
        raise CsvError("duplicate column names in header")
    if any(n == "" for n in names):
        raise CsvError("empty column name in header")

    width = len(names)
    for row in reader:
        if len(row) != width:
            raise CsvError(
                f"row {len(rows) + 1} has {len(row)} fields, expected {width}",
                row=len(rows) + 1,
            )
        rows.append(row)

    raw_columns = [[row[j] for row in rows] for j in range(width)]

    inferred = infer_schema(names, raw_columns)
    if declared_schema:
        unknown = set(declared_schema) - set(names)
        if unknown:
            raise UnknownFeatureError(f"declared schema names absent columns: {sorted(unknown)}")
        by_name = {}
        for feat, cells in zip(inferred, raw_columns):
            kind = declared_schema.get(feat.name)
            if kind is None or kind == feat.kind:
                by_name[feat.name] = feat
            elif kind == CONTINUOUS:
                by_name[feat.name] = FeatureSchema(feat.name, CONTINUOUS)
            elif kind == CATEGORICAL:
                levels, _ = _index_levels(c for c in cells if c != "")
                by_name[feat.name] = FeatureSchema(feat.name, CATEGORICAL, tuple(levels))
            else:
                raise ValidationError(f"unknown declared kind {kind!r} for column {feat.name!r}")
        schema = [by_name[n] for n in names]
    else:
        schema = inferred

    if not rows:
        warnings.warn("CSV body is empty; all columns default to categorical with no levels")

    columns: dict[str, np.ndarray] = {}
    for feat, cells in zip(schema, raw_columns):
        if feat.is_continuous:
            values = np.empty(len(cells), dtype=np.float64)
            for i, cell in enumerate(cells):
                if cell == "":
                    raise CsvError(
                        f"missing value in column {feat.name!r} at row {i + 1}",
                        row=i + 1, column=feat.name,
                    )
                if not _parses_as_finite_real(cell):
                    raise CsvError(
                        f"cell {cell!r} in continuous column {feat.name!r} at row {i + 1} "
                        "is not a finite number",
                        row=i + 1, column=feat.name,
                    )
                values[i] = float(cell)
            columns[feat.name] = values
        else:
            index = {lvl: k for k, lvl in enumerate(feat.levels)}
            codes = np.empty(len(cells), dtype=np.int64)
            for i, cell in enumerate(cells):
                if cell == "":
                    raise CsvError(
                        f"missing value in column {feat.name!r} at row {i + 1}",
                        row=i + 1, column=feat.name,
                    )
                if cell not in index:
                    raise CsvError(
                        f"value {cell!r} in column {feat.name!r} at row {i + 1} "
                        "is not in the declared level table",
                        row=i + 1, column=feat.name,
                    )
                codes[i] = index[cell]
            columns[feat.name] = codes

    return Dataset(schema, columns)


def summarize(dataset: Dataset, feature: str) -> ColumnSummary:
    """Summary statistics of a continuous column, for grid construction."""
    feat = dataset.schema_for(feature)
    if not feat.is_continuous:
        raise ValidationError(
            f"feature {feature!r} is categorical; its summary is the level table"
        )
    col = dataset.column(feature)
    if col.size == 0:
        raise ValidationError(f"feature {feature!r} has no rows to summarize")
    ordered = np.sort(col)
    return ColumnSummary(
        mean=float(np.mean(col)),
        min=float(ordered[0]),
        max=float(ordered[-1]),
        unique_values=np.unique(col),
        _sorted=ordered,
    )
