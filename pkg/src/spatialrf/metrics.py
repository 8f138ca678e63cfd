"""Classification and regression scores with per-fold and pooled aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, UndefinedMetricError

CLASSIFICATION_METRICS = ("accuracy", "kappa")
REGRESSION_METRICS = ("rmse", "r2")
LOWER_IS_BETTER = frozenset({"rmse"})

PER_FOLD_MEAN = "per_fold_mean"
GLOBAL = "global"


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with rows = reference class, columns = predicted class."""

    classes: tuple
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ConfigError(f"confusion matrix must be square, got shape {counts.shape}")
        if counts.shape[0] != len(self.classes):
            raise ConfigError("confusion matrix size does not match class list")
        if np.any(counts < 0):
            raise ConfigError("confusion matrix counts must be non-negative")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "classes", tuple(self.classes))

    @classmethod
    def from_counts(cls, counts) -> "ConfusionMatrix":
        counts = np.asarray(counts)
        return cls(tuple(range(counts.shape[0])), counts)

    @classmethod
    def from_labels(cls, observed, predicted, classes: Sequence | None = None) -> "ConfusionMatrix":
        observed = list(observed)
        predicted = list(predicted)
        if len(observed) != len(predicted):
            raise ConfigError("observed and predicted differ in length")
        if classes is None:
            classes = sorted(set(observed) | set(predicted))
        index = {c: i for i, c in enumerate(classes)}
        counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
        for o, p in zip(observed, predicted):
            counts[index[o], index[p]] += 1
        return cls(tuple(classes), counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def accuracy(cm: ConfusionMatrix) -> float:
    total = cm.total
    if total == 0:
        raise ConfigError("accuracy of an empty confusion matrix")
    return float(np.trace(cm.counts)) / total


def kappa(cm: ConfusionMatrix) -> float:
    """Cohen's kappa, ``(po - pe) / (1 - pe)``."""
    total = cm.total
    if total == 0:
        raise ConfigError("kappa of an empty confusion matrix")
    po = float(np.trace(cm.counts)) / total
    rows = cm.counts.sum(axis=1).astype(float)
    cols = cm.counts.sum(axis=0).astype(float)
    pe = float(np.dot(rows, cols)) / (float(total) * total)
    if pe >= 1.0:
        raise UndefinedMetricError("kappa is undefined when chance agreement is 1")
    return (po - pe) / (1.0 - pe)


def _pair(observed, predicted, minimum: int) -> tuple[np.ndarray, np.ndarray]:
    o = np.asarray(observed, dtype=float).ravel()
    p = np.asarray(predicted, dtype=float).ravel()
    if len(o) != len(p):
        raise ConfigError(f"length mismatch: {len(o)} observed vs {len(p)} predicted")
    if len(o) < minimum:
        raise ConfigError(f"need at least {minimum} values, got {len(o)}")
    return o, p


def rmse(observed, predicted) -> float:
    o, p = _pair(observed, predicted, 1)
    return math.sqrt(float(np.mean((o - p) ** 2)))


def r_squared(observed, predicted) -> float:
    """Squared Pearson correlation between observations and predictions."""
    o, p = _pair(observed, predicted, 2)
    do = o - o.mean()
    dp = p - p.mean()
    so = float(np.dot(do, do))
    sp = float(np.dot(dp, dp))
    if so == 0.0 or sp == 0.0:
        raise UndefinedMetricError("r2 is undefined for a constant vector")
    r = float(np.dot(do, dp)) / math.sqrt(so * sp)
    return min(r * r, 1.0)


def metrics_for(task) -> tuple:
    task = getattr(task, "value", task)
    if task == "classification":
        return CLASSIFICATION_METRICS
    if task == "regression":
        return REGRESSION_METRICS
    raise ConfigError(f"unknown task {task!r}")


def compute(name: str, observed, predicted) -> float:
    """Evaluate metric ``name``; raises ``UndefinedMetricError`` if undefined."""
    if name == "accuracy":
        return accuracy(ConfusionMatrix.from_labels(observed, predicted))
    if name == "kappa":
        return kappa(ConfusionMatrix.from_labels(observed, predicted))
    if name == "rmse":
        return rmse(observed, predicted)
    if name == "r2":
        try:
            return r_squared(observed, predicted)
        except ConfigError:
            raise UndefinedMetricError("r2 needs at least two values") from None
    raise ConfigError(f"unknown metric {name!r}")


def better(name: str, a: float, b: float) -> bool:
    """True if score ``a`` is strictly better than ``b`` for metric ``name``."""
    return a < b if name in LOWER_IS_BETTER else a > b


@dataclass(frozen=True)
class MetricValue:
    name: str
    value: float
    scope: str
    n_folds: int = 1
    n_skipped: int = 0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "scope": self.scope,
            "value": self.value,
            "n_folds": self.n_folds,
            "n_skipped": self.n_skipped,
        }


def aggregate(per_fold_results: Iterable, names: Sequence[str]) -> list[MetricValue]:
    """Per-fold mean and pooled (global) value of every metric in ``names``.

    ``per_fold_results`` yields ``(fold, observed, predicted)``. Folds where a
    metric is undefined are skipped for its mean and counted in
    ``n_skipped``; the mean is unweighted across folds. A metric undefined
    in every fold gets the value NaN.
    """
    results = [(f, list(o), list(p)) for f, o, p in per_fold_results]
    results = [r for r in results if len(r[1])]
    if not results:
        raise ConfigError("aggregate needs at least one fold with predictions")
    pooled_o = [v for _, o, _ in results for v in o]
    pooled_p = [v for _, _, p in results for v in p]
    out = []
    for name in names:
        fold_values = []
        for _, o, p in results:
            try:
                fold_values.append(compute(name, o, p))
            except UndefinedMetricError:
                pass
        skipped = len(results) - len(fold_values)
        mean = float(np.mean(fold_values)) if fold_values else float("nan")
        out.append(MetricValue(name, mean, PER_FOLD_MEAN, len(results), skipped))
        try:
            value = compute(name, pooled_o, pooled_p)
        except UndefinedMetricError:
            value = float("nan")
        out.append(MetricValue(name, value, GLOBAL, len(results), 0))
    return out


def lookup(values: Sequence[MetricValue], name: str, scope: str = PER_FOLD_MEAN) -> float:
    for v in values:
        if v.name == name and v.scope == scope:
            return v.value
    raise KeyError((name, scope))
