"""Tabular training data: the sample table, CSV I/O and raster extraction."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import (
    ConfigError,
    ExtractionError,
    OutOfBoundsError,
    ParseError,
    SchemaError,
    ValidationError,
)

REQUIRED_COLUMNS = ("id", "group", "x", "y", "response")
GEOLOCATION_FEATURES = ("coord_x", "coord_y")


class Task(str, enum.Enum):
    CLASSIFICATION = "classification"
    REGRESSION = "regression"

    @classmethod
    def parse(cls, value) -> "Task":
        if isinstance(value, Task):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigError(f"unknown task {value!r}") from None


class SampleRow(NamedTuple):
    id: int
    group: int
    x: float
    y: float
    features: tuple
    response: object


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SampleTable:
    """Immutable column-oriented table of training samples.

    ``features`` is an ``(n, p)`` float array aligned to ``feature_names``.
    ``response`` holds string labels for classification and floats for
    regression. Construct through :meth:`from_arrays` to get validation.
    """

    ids: np.ndarray
    groups: np.ndarray
    x: np.ndarray
    y: np.ndarray
    features: np.ndarray
    response: np.ndarray
    feature_names: tuple
    task: Task

    @classmethod
    def from_arrays(cls, ids, groups, x, y, features, response, feature_names, task):
        task = Task.parse(task)
        feature_names = tuple(str(f) for f in feature_names)
        n = len(ids)
        features = np.asarray(features, dtype=float)
        if features.size == 0:
            features = features.reshape(n, len(feature_names))
        if task is Task.CLASSIFICATION:
            response = np.asarray([str(r) for r in response], dtype=object)
        else:
            response = np.asarray(response, dtype=float)
        table = cls(
            ids=_frozen(np.asarray(ids, dtype=np.int64)),
            groups=_frozen(np.asarray(groups, dtype=np.int64)),
            x=_frozen(np.asarray(x, dtype=float)),
            y=_frozen(np.asarray(y, dtype=float)),
            features=_frozen(features),
            response=_frozen(response),
            feature_names=feature_names,
            task=task,
        )
        table.validate()
        return table

    @classmethod
    def from_rows(cls, rows: Iterable[SampleRow], feature_names, task):
        rows = list(rows)
        p = len(feature_names)
        return cls.from_arrays(
            [r.id for r in rows],
            [r.group for r in rows],
            [r.x for r in rows],
            [r.y for r in rows],
            np.array([list(r.features) for r in rows], dtype=float).reshape(len(rows), p),
            [r.response for r in rows],
            feature_names,
            task,
        )

    def validate(self) -> None:
        n = len(self.ids)
        for name in ("groups", "x", "y", "response"):
            if len(getattr(self, name)) != n:
                raise ValidationError(f"column {name!r} has {len(getattr(self, name))} rows, expected {n}")
        if self.features.shape != (n, len(self.feature_names)):
            raise ValidationError(
                f"feature matrix shape {self.features.shape} does not match "
                f"{n} rows x {len(self.feature_names)} features"
            )
        if any(not f for f in self.feature_names):
            raise ValidationError("feature names must be non-empty")
        if len(set(self.feature_names)) != len(self.feature_names):
            dup = sorted({f for f in self.feature_names if self.feature_names.count(f) > 1})
            raise ValidationError(f"duplicate feature names: {dup}")
        if len(np.unique(self.ids)) != n:
            vals, counts = np.unique(self.ids, return_counts=True)
            raise ValidationError(f"duplicate sample ids: {vals[counts > 1].tolist()}")
        if np.any(self.groups < 0):
            raise ValidationError("group ids must be >= 0")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValidationError("sample coordinates must be finite")
        if not np.all(np.isfinite(self.features)):
            bad = int(np.argwhere(~np.isfinite(self.features))[0, 0])
            raise ValidationError(f"missing or non-finite feature value in row {bad}")
        if self.task is Task.REGRESSION and not np.all(np.isfinite(self.response)):
            raise ValidationError("regression responses must be finite")
        if self.task is Task.CLASSIFICATION and any(r == "" for r in self.response):
            raise ValidationError("empty class label")

    # -- access -----------------------------------------------------------

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self) -> Iterator[SampleRow]:
        return iter(self.rows)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def rows(self) -> list[SampleRow]:
        return [
            SampleRow(
                int(self.ids[i]),
                int(self.groups[i]),
                float(self.x[i]),
                float(self.y[i]),
                tuple(float(v) for v in self.features[i]),
                self.response[i] if self.task is Task.CLASSIFICATION else float(self.response[i]),
            )
            for i in range(len(self))
        ]

    @property
    def labels(self) -> list[str]:
        """Sorted label set (classification only)."""
        if self.task is not Task.CLASSIFICATION:
            raise ConfigError("label set is only defined for classification tables")
        return sorted(set(self.response.tolist()))

    def subset(self, index) -> "SampleTable":
        index = np.asarray(index)
        return SampleTable.from_arrays(
            self.ids[index],
            self.groups[index],
            self.x[index],
            self.y[index],
            self.features[index],
            self.response[index],
            self.feature_names,
            self.task,
        )

    def select_features(self, names: Sequence[str]) -> "SampleTable":
        missing = [f for f in names if f not in self.feature_names]
        if missing:
            raise ConfigError(f"unknown features: {missing}")
        cols = [self.feature_names.index(f) for f in names]
        return SampleTable.from_arrays(
            self.ids, self.groups, self.x, self.y, self.features[:, cols],
            self.response, names, self.task,
        )


def _parse_float(text: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"row {line}: column {column!r}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise ParseError(f"row {line}: column {column!r}: non-finite value {text!r}")
    return value


def _parse_int(text: str, line: int, column: str) -> int:
    try:
        return int(text)
    except ValueError:
        try:
            value = float(text)
        except ValueError:
            value = math.nan
        if value.is_integer():
            return int(value)
        raise ParseError(f"row {line}: column {column!r}: cannot parse {text!r} as an integer") from None


def read_samples_csv(path, schema: dict | None = None, task="regression") -> SampleTable:
    """Read a sample CSV.

    ``schema`` optionally renames the required columns, e.g.
    ``{"group": "polygon"}``; every other column is a feature, in file order.
    Row numbers in error messages count the header as row 1.
    """
    task = Task.parse(task)
    names = {c: c for c in REQUIRED_COLUMNS}
    if schema:
        unknown = set(schema) - set(REQUIRED_COLUMNS)
        if unknown:
            raise ConfigError(f"unknown schema keys: {sorted(unknown)}")
        names.update(schema)
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"sample file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        for key in REQUIRED_COLUMNS:
            if names[key] not in header:
                raise SchemaError(f"{path}: missing required column {names[key]!r}")
        if len(set(header)) != len(header):
            raise SchemaError(f"{path}: duplicate column names in header")
        pos = {key: header.index(names[key]) for key in REQUIRED_COLUMNS}
        required_pos = set(pos.values())
        feat_pos = [i for i in range(len(header)) if i not in required_pos]
        feature_names = [header[i] for i in feat_pos]

        ids, groups, xs, ys, feats, resp = [], [], [], [], [], []
        for line, record in enumerate(reader, start=2):
            if not record or all(not c.strip() for c in record):
                continue
            if len(record) != len(header):
                raise ParseError(f"row {line}: expected {len(header)} fields, got {len(record)}")
            record = [c.strip() for c in record]
            ids.append(_parse_int(record[pos["id"]], line, names["id"]))
            groups.append(_parse_int(record[pos["group"]], line, names["group"]))
            xs.append(_parse_float(record[pos["x"]], line, names["x"]))
            ys.append(_parse_float(record[pos["y"]], line, names["y"]))
            feats.append([_parse_float(record[i], line, header[i]) for i in feat_pos])
            r = record[pos["response"]]
            if task is Task.CLASSIFICATION:
                if not r:
                    raise ParseError(f"row {line}: empty class label")
                resp.append(r)
            else:
                resp.append(_parse_float(r, line, names["response"]))
    return SampleTable.from_arrays(
        ids, groups, xs, ys,
        np.array(feats, dtype=float).reshape(len(ids), len(feature_names)),
        resp, feature_names, task,
    )


def _fmt(v: float) -> str:
    return repr(float(v))


def write_samples_csv(table: SampleTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(REQUIRED_COLUMNS) + list(table.feature_names))
        for i in range(len(table)):
            response = table.response[i]
            if table.task is Task.REGRESSION:
                response = _fmt(response)
            writer.writerow(
                [int(table.ids[i]), int(table.groups[i]), _fmt(table.x[i]), _fmt(table.y[i]), response]
                + [_fmt(v) for v in table.features[i]]
            )


def extract_at_samples(stack, points, task=None) -> SampleTable:
    """Sample every band of ``stack`` at the cell containing each point.

    ``points`` is a sequence of ``(id, group, x, y, response)``. When ``task``
    is omitted it is inferred from the response type (strings mean
    classification).
    """
    points = list(points)
    if task is None:
        task = (
            Task.CLASSIFICATION
            if points and isinstance(points[0][4], str)
            else Task.REGRESSION
        )
    names = stack.names
    feats = np.empty((len(points), len(names)))
    for i, (pid, _group, x, y, _resp) in enumerate(points):
        try:
            row, col = stack.cell_index(x, y)
        except OutOfBoundsError:
            raise OutOfBoundsError(f"sample {pid} at ({x}, {y}) lies outside the raster extent") from None
        for j, grid in enumerate(stack.grids):
            value = grid.values[row, col]
            if grid.is_nodata(value):
                raise ExtractionError(f"sample {pid}: band {names[j]!r} is NODATA at ({x}, {y})")
            feats[i, j] = value
    return SampleTable.from_arrays(
        [p[0] for p in points],
        [p[1] for p in points],
        [p[2] for p in points],
        [p[3] for p in points],
        feats,
        [p[4] for p in points],
        names,
        task,
    )


def add_geolocation_features(table: SampleTable) -> SampleTable:
    clash = [f for f in GEOLOCATION_FEATURES if f in table.feature_names]
    if clash:
        raise ValidationError(f"feature name collision: {clash}")
    feats = np.column_stack([table.features, table.x, table.y]) if len(table) else np.empty((0, table.n_features + 2))
    return SampleTable.from_arrays(
        table.ids, table.groups, table.x, table.y, feats, table.response,
        table.feature_names + GEOLOCATION_FEATURES, table.task,
    )
