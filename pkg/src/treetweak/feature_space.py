"""Feature schema, z-score standardization, and tabular ingestion.

All downstream math runs in standardized units: categorical columns are
expanded to 0/1 indicator groups, then every column is mapped to z-scores
using sample statistics fitted on the training table. The fitted
:class:`FeatureSpace` is immutable and travels with the model so that new
instances are encoded identically at tweak time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from treetweak.errors import (
    LengthMismatch,
    ParseError,
    SchemaMismatch,
    UnknownCategory,
    ZeroVariance,
)

LABEL_COLUMN = "label"


@dataclass(frozen=True)
class OneHotMember:
    """Marks a feature as one indicator column of a categorical group."""

    group: str
    category: str


@dataclass(frozen=True)
class FeatureMeta:
    """One feature: name, kind, adjustability, and standardization stats.

    ``mean``/``std_dev`` are in original units and default to the identity
    transform (0, 1) until :func:`fit_standardizer` fills them in.
    """

    name: str
    one_hot: OneHotMember | None = None
    adjustable: bool = True
    mean: float = 0.0
    std_dev: float = 1.0

    @property
    def is_continuous(self) -> bool:
        return self.one_hot is None


class FeatureSpace:
    """Ordered feature schema; indices are stable across save/load.

    Immutable after construction and therefore safe to share read-only
    across any number of concurrent workers.
    """

    def __init__(self, features: Iterable[FeatureMeta]):
        feats = tuple(features)
        if not feats:
            raise SchemaMismatch("a feature space needs at least one feature")
        names = [f.name for f in feats]
        if len(set(names)) != len(names):
            raise SchemaMismatch("duplicate feature names")
        for f in feats:
            if not f.std_dev > 0:
                raise ZeroVariance(f.name, f"feature {f.name!r} has std_dev <= 0")
        groups: dict[str, list[int]] = {}
        for i, f in enumerate(feats):
            if f.one_hot is not None:
                groups.setdefault(f.one_hot.group, []).append(i)
        self.features = feats
        self.one_hot_groups = {g: tuple(ix) for g, ix in groups.items()}
        self._means = np.array([f.mean for f in feats], dtype=float)
        self._stds = np.array([f.std_dev for f in feats], dtype=float)
        self._adjustable = np.array([f.adjustable for f in feats], dtype=bool)

    @property
    def n(self) -> int:
        return len(self.features)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    @property
    def adjustable_mask(self) -> np.ndarray:
        return self._adjustable

    def to_dict(self) -> dict:
        out = []
        for f in self.features:
            entry = {
                "name": f.name,
                "adjustable": f.adjustable,
                "mean": float(f.mean),
                "std_dev": float(f.std_dev),
            }
            if f.one_hot is None:
                entry["kind"] = "continuous"
            else:
                entry["kind"] = "one_hot"
                entry["group"] = f.one_hot.group
                entry["category"] = f.one_hot.category
            out.append(entry)
        return {"features": out}

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureSpace":
        feats = []
        for entry in doc["features"]:
            one_hot = None
            if entry["kind"] == "one_hot":
                one_hot = OneHotMember(entry["group"], entry["category"])
            feats.append(
                FeatureMeta(
                    name=entry["name"],
                    one_hot=one_hot,
                    adjustable=bool(entry["adjustable"]),
                    mean=float(entry["mean"]),
                    std_dev=float(entry["std_dev"]),
                )
            )
        return cls(feats)


@dataclass(frozen=True, eq=False)
class Instance:
    """An n-dimensional vector in standardized space, optionally labeled.

    Labels use the {-1, +1} convention throughout; {0, 1} labels are
    rejected rather than remapped to avoid silent polarity bugs.
    """

    values: np.ndarray
    label: int | None = None

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 1:
            raise ValueError("instance values must be a 1-D vector")
        object.__setattr__(self, "values", arr)
        if self.label is not None and self.label not in (-1, 1):
            raise ValueError(f"label must be -1 or +1, got {self.label!r}")

    def __len__(self) -> int:
        return len(self.values)


def fit_standardizer(
    rows, space: FeatureSpace, columns: Sequence[str] | None = None
) -> FeatureSpace:
    """Fit per-feature sample mean and std (ddof=1) on an encoded table.

    ``rows`` is an (m, n) numeric table aligned with ``space.features``
    (categorical columns already expanded to indicators). Continuous
    features with zero sample variance are a hard error: silently dropping
    or rescaling them would desynchronize saved models. Indicator columns
    that happen to be constant (a category absent from, or universal in,
    the table) fall back to unit scale instead.
    """
    if columns is not None and tuple(columns) != space.names:
        raise SchemaMismatch(
            f"column names {tuple(columns)!r} do not match schema {space.names!r}"
        )
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != space.n:
        raise SchemaMismatch(
            f"expected a 2-D table with {space.n} columns, got shape {arr.shape}"
        )
    if arr.shape[0] < 2:
        raise ValueError("fitting needs at least 2 rows")
    means = arr.mean(axis=0)
    stds = arr.std(axis=0, ddof=1)
    fitted = []
    for i, f in enumerate(space.features):
        std = float(stds[i])
        if std == 0.0:
            if f.is_continuous:
                raise ZeroVariance(f.name)
            std = 1.0  # constant indicator column: keep identity scale
        fitted.append(replace(f, mean=float(means[i]), std_dev=std))
    return FeatureSpace(fitted)


def standardize(raw, space: FeatureSpace, label: int | None = None) -> Instance:
    """Map a raw-unit vector to z-scores: (raw - mean) / std per feature."""
    arr = np.asarray(raw, dtype=float)
    if arr.shape != (space.n,):
        raise LengthMismatch(f"expected {space.n} values, got shape {arr.shape}")
    return Instance((arr - space._means) / space._stds, label=label)


def destandardize(inst, space: FeatureSpace) -> np.ndarray:
    """Inverse of :func:`standardize`: raw = mean + std * z."""
    arr = inst.values if isinstance(inst, Instance) else np.asarray(inst, dtype=float)
    if arr.shape != (space.n,):
        raise LengthMismatch(f"expected {space.n} values, got shape {arr.shape}")
    return space._means + space._stds * arr


def one_hot_encode(values: Sequence, categories: Sequence[str]) -> np.ndarray:
    """Expand a categorical column to len(categories) indicator columns.

    Row i has a single 1 in the column of its category and 0 elsewhere.
    """
    index = {c: j for j, c in enumerate(categories)}
    out = np.zeros((len(values), len(categories)), dtype=float)
    for i, v in enumerate(values):
        j = index.get(v)
        if j is None:
            raise UnknownCategory(v, tuple(categories))
        out[i, j] = 1.0
    return out


def one_hot_decode(row: Sequence[float], categories: Sequence[str]):
    """Inverse of :func:`one_hot_encode` for a single indicator row."""
    arr = np.asarray(row, dtype=float)
    if arr.shape != (len(categories),):
        raise LengthMismatch("indicator row length does not match categories")
    hot = np.nonzero(arr == 1.0)[0]
    if len(hot) != 1 or not np.all((arr == 0.0) | (arr == 1.0)):
        raise ValueError("indicator row must contain exactly one 1 and otherwise 0s")
    return categories[int(hot[0])]


@dataclass(frozen=True)
class ColumnSpec:
    """Declares one raw input column before encoding.

    ``categories=None`` on a categorical column means "infer the sorted
    set of observed values". ``adjustable=None`` resolves to True for
    continuous columns and False for categorical ones: tweaking a single
    indicator dimension independently can break the exactly-one-hot
    invariant, so category switches are opt-in.
    """

    name: str
    categorical: bool = False
    categories: tuple[str, ...] | None = None
    adjustable: bool | None = None


@dataclass(frozen=True)
class TableSchema:
    columns: tuple[ColumnSpec, ...]
    label_column: str = LABEL_COLUMN


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise ParseError(1, "empty file")
    return rows[0], rows[1:]


def _parse_label(text: str, line: int) -> int:
    try:
        value = int(text)
    except ValueError:
        raise ParseError(line, f"label {text!r} is not an integer") from None
    if value not in (-1, 1):
        raise ParseError(line, f"label must be -1 or +1, got {value}")
    return value


def _parse_float(text: str, column: str, line: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(line, f"column {column!r}: {text!r} is not a number") from None


def load_table(path, schema: TableSchema | None = None):
    """Load a raw CSV, one-hot encode, fit the standardizer, standardize.

    Returns ``(fitted_space, instances)``. The header row must match the
    schema's column names, optionally followed by a final label column.
    Without a schema, every column is treated as continuous and adjustable,
    and a trailing column named "label" is taken as the label.
    """
    header, data_rows = _read_csv(path)
    if schema is None:
        names = header[:-1] if header and header[-1] == LABEL_COLUMN else header
        schema = TableSchema(tuple(ColumnSpec(name) for name in names))
    expected = [c.name for c in schema.columns]
    if header == expected:
        has_label = False
    elif header == expected + [schema.label_column]:
        has_label = True
    else:
        raise SchemaMismatch(
            f"header {header!r} does not match schema columns {expected!r}"
        )

    width = len(expected) + (1 if has_label else 0)
    labels: list[int | None] = []
    cells: list[list[str]] = []
    for offset, row in enumerate(data_rows):
        line = offset + 2  # 1-based, after the header
        if len(row) != width:
            raise ParseError(line, f"expected {width} fields, got {len(row)}")
        if has_label:
            labels.append(_parse_label(row[-1], line))
            cells.append(row[:-1])
        else:
            labels.append(None)
            cells.append(row)
    if not cells:
        raise ParseError(2, "no data rows")

    metas: list[FeatureMeta] = []
    blocks: list[np.ndarray] = []
    for j, col in enumerate(schema.columns):
        raw = [row[j] for row in cells]
        if col.categorical:
            categories = col.categories or tuple(sorted(set(raw)))
            adjustable = False if col.adjustable is None else col.adjustable
            blocks.append(one_hot_encode(raw, categories))
            metas.extend(
                FeatureMeta(
                    name=f"{col.name}={cat}",
                    one_hot=OneHotMember(col.name, cat),
                    adjustable=adjustable,
                )
                for cat in categories
            )
        else:
            parsed = [
                _parse_float(text, col.name, offset + 2)
                for offset, text in enumerate(raw)
            ]
            blocks.append(np.asarray(parsed, dtype=float).reshape(-1, 1))
            adjustable = True if col.adjustable is None else col.adjustable
            metas.append(FeatureMeta(name=col.name, adjustable=adjustable))

    encoded = np.hstack(blocks)
    space = fit_standardizer(encoded, FeatureSpace(metas))
    instances = [
        standardize(encoded[i], space, label=labels[i]) for i in range(len(cells))
    ]
    return space, instances


def expected_raw_header(space: FeatureSpace) -> list[str]:
    """Raw CSV header for a fitted space: group columns appear once."""
    header: list[str] = []
    seen_groups: set[str] = set()
    for f in space.features:
        if f.one_hot is None:
            header.append(f.name)
        elif f.one_hot.group not in seen_groups:
            seen_groups.add(f.one_hot.group)
            header.append(f.one_hot.group)
    return header


def load_instances(path, space: FeatureSpace) -> list[Instance]:
    """Load raw instances and standardize them with an already-fitted space.

    Used at tweak time: the file's columns are the raw ones the model was
    trained from (categorical groups as single columns), and the model's
    stored statistics are applied, never refitted.
    """
    header, data_rows = _read_csv(path)
    expected = expected_raw_header(space)
    if header == expected:
        has_label = False
    elif header == expected + [LABEL_COLUMN]:
        has_label = True
    else:
        raise SchemaMismatch(
            f"header {header!r} does not match the model's columns {expected!r}"
        )

    # Per raw column: either a continuous feature index or the group members.
    group_members: dict[str, list[tuple[int, str]]] = {}
    continuous_index: dict[str, int] = {}
    for i, f in enumerate(space.features):
        if f.one_hot is None:
            continuous_index[f.name] = i
        else:
            group_members.setdefault(f.one_hot.group, []).append(
                (i, f.one_hot.category)
            )

    instances = []
    for offset, row in enumerate(data_rows):
        line = offset + 2
        width = len(expected) + (1 if has_label else 0)
        if len(row) != width:
            raise ParseError(line, f"expected {width} fields, got {len(row)}")
        label = _parse_label(row[-1], line) if has_label else None
        raw = np.zeros(space.n, dtype=float)
        for name, text in zip(expected, row):
            if name in continuous_index:
                raw[continuous_index[name]] = _parse_float(text, name, line)
            else:
                members = group_members[name]
                if text not in {cat for _, cat in members}:
                    raise UnknownCategory(text, tuple(cat for _, cat in members))
                for idx, cat in members:
                    raw[idx] = 1.0 if cat == text else 0.0
        instances.append(standardize(raw, space, label=label))
    return instances
