"""Bagged CART ensembles (Random Forest) for classification and regression."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _tree
from ._parallel import parallel_map
from .errors import ConfigError, DegenerateResponseError, FeatureMismatchError, FormatError
from .samples import SampleTable, Task

MODEL_FORMAT = "spatialrf-forest"
MODEL_VERSION = 1


@dataclass(frozen=True)
class ForestConfig:
    """Training parameters.

    ``min_node_size=None`` resolves to 1 for classification and 5 for
    regression. Nodes holding ``min_node_size`` rows or fewer are not split.
    """

    n_trees: int = 500
    mtry: int | None = None
    min_node_size: int | None = None
    seed: int = 0

    def resolved(self, n_features: int, task: Task) -> "ForestConfig":
        mtry = self.mtry
        if mtry is None:
            mtry = max(1, int(np.sqrt(n_features))) if task is Task.CLASSIFICATION else max(1, n_features // 3)
        min_node = self.min_node_size
        if min_node is None:
            min_node = 1 if task is Task.CLASSIFICATION else 5
        cfg = replace(self, mtry=int(mtry), min_node_size=int(min_node))
        cfg.check(n_features)
        return cfg

    def check(self, n_features: int) -> None:
        if self.n_trees < 1:
            raise ConfigError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.mtry is not None and not 1 <= self.mtry <= n_features:
            raise ConfigError(f"mtry must lie in [1, {n_features}], got {self.mtry}")
        if self.min_node_size is not None and self.min_node_size < 1:
            raise ConfigError(f"min_node_size must be >= 1, got {self.min_node_size}")


@dataclass(eq=False)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    inbag: np.ndarray | None = None
    votes: np.ndarray = field(init=False)

    def __post_init__(self):
        self.votes = _tree.leaf_votes(self.value)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        return _tree.apply_tree(self.feature, self.threshold, self.left, self.right, X)

    def predict_values(self, X: np.ndarray, classification: bool) -> np.ndarray:
        leaves = self.apply(X)
        if classification:
            return self.votes[leaves].astype(float)
        return self.value[leaves, 0]

    def to_dict(self, node: int = 0, names: Sequence[str] | None = None) -> dict:
        f = int(self.feature[node])
        if f < 0:
            v = self.value[node]
            return {"leaf": [float(a) for a in v] if len(v) > 1 or self.value.shape[1] > 1 else float(v[0])}
        out = {"feature": f, "threshold": float(self.threshold[node])}
        if names is not None:
            out["name"] = names[f]
        out["left"] = self.to_dict(int(self.left[node]), names)
        out["right"] = self.to_dict(int(self.right[node]), names)
        return out

    @classmethod
    def from_dict(cls, doc: dict, width: int) -> "Tree":
        feature, threshold, left, right, value = [], [], [], [], []
        todo = [(doc, None, None)]
        while todo:
            item, parent, side = todo.pop()
            i = len(feature)
            if parent is not None:
                (left if side == "left" else right)[parent] = i
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            if "leaf" in item:
                leaf = item["leaf"]
                value.append(list(leaf) if isinstance(leaf, list) else [leaf])
            else:
                feature[i] = int(item["feature"])
                threshold[i] = float(item["threshold"])
                value.append([0.0] * width)
                todo.append((item["right"], i, "right"))
                todo.append((item["left"], i, "left"))
        return cls(
            np.array(feature, dtype=np.int64),
            np.array(threshold, dtype=float),
            np.array(left, dtype=np.int64),
            np.array(right, dtype=np.int64),
            np.array(value, dtype=float).reshape(len(feature), width),
        )


def tree_seeds(seed: int, n_trees: int) -> np.ndarray:
    """Independent 64-bit seeds for each tree, derived from one master seed."""
    return np.random.SeedSequence(int(seed)).generate_state(n_trees, dtype=np.uint64)


def _grow(X, y, classes, n_classes, mtry, min_node_size, seed):
    state = np.array([seed], dtype=np.uint64)
    sample = _tree.bootstrap_indices(state, X.shape[0])
    feature, threshold, left, right, value, n_nodes, importance = _tree.grow_tree(
        X, y, classes, n_classes, sample, mtry, min_node_size, state[0]
    )
    inbag = np.bincount(sample, minlength=X.shape[0])
    tree = Tree(
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        inbag,
    )
    return tree, importance


@dataclass(eq=False)
class Forest:
    trees: list
    config: ForestConfig
    feature_names: tuple
    task: Task
    classes: tuple = ()
    raw_importance: np.ndarray | None = None
    oob_score: float = float("nan")

    @property
    def is_classification(self) -> bool:
        return self.task is Task.CLASSIFICATION

    @property
    def importance(self) -> np.ndarray:
        """Impurity-decrease importance scaled so the maximum is 1."""
        raw = np.asarray(self.raw_importance, dtype=float)
        top = raw.max() if raw.size else 0.0
        return raw / top if top > 0 else np.zeros_like(raw)

    def _matrix(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != len(self.feature_names):
            raise FeatureMismatchError(
                f"expected {len(self.feature_names)} features, got {X.shape[1]}"
            )
        return np.ascontiguousarray(X)

    def predict_values(self, X, jobs: int = 1) -> np.ndarray:
        """Numeric predictions: class index (as float) or regression value."""
        X = self._matrix(X)
        if not self.is_classification:
            total = np.zeros(X.shape[0])
            for p in parallel_map(lambda t: t.predict_values(X, False), self.trees, jobs):
                total += p
            return total / len(self.trees)
        votes = np.zeros((X.shape[0], len(self.classes)), dtype=np.int64)
        rows = np.arange(X.shape[0])
        for p in parallel_map(lambda t: t.predict_values(X, True), self.trees, jobs):
            votes[rows, p.astype(np.int64)] += 1
        # argmax returns the first maximum: ties go to the lowest class index
        return votes.argmax(axis=1).astype(float)

    def predict(self, X, jobs: int = 1) -> np.ndarray:
        """Predictions in response space (labels for classification)."""
        values = self.predict_values(X, jobs=jobs)
        if self.is_classification:
            labels = np.asarray(self.classes, dtype=object)
            return labels[values.astype(np.int64)]
        return values

    def importance_ranking(self) -> list[tuple[str, float]]:
        imp = self.importance
        # stable sort keeps feature order for ties
        order = sorted(range(len(imp)), key=lambda j: -imp[j])
        return [(self.feature_names[j], float(imp[j])) for j in order]

    # -- serialization --------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "task": self.task.value,
            "config": {
                "n_trees": self.config.n_trees,
                "mtry": self.config.mtry,
                "min_node_size": self.config.min_node_size,
                "seed": self.config.seed,
            },
            "feature_names": list(self.feature_names),
            "classes": list(self.classes),
            "oob_score": None if np.isnan(self.oob_score) else float(self.oob_score),
            "raw_importance": [float(v) for v in self.raw_importance],
            "importance": [float(v) for v in self.importance],
            "trees": [t.to_dict(names=self.feature_names) for t in self.trees],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Forest":
        if doc.get("format") != MODEL_FORMAT:
            raise FormatError("not a forest model document")
        if doc.get("version") != MODEL_VERSION:
            raise FormatError(f"unsupported model version {doc.get('version')}")
        task = Task.parse(doc["task"])
        classes = tuple(doc.get("classes", ()))
        width = len(classes) if task is Task.CLASSIFICATION else 1
        oob = doc.get("oob_score")
        return cls(
            trees=[Tree.from_dict(t, width) for t in doc["trees"]],
            config=ForestConfig(**doc["config"]),
            feature_names=tuple(doc["feature_names"]),
            task=task,
            classes=classes,
            raw_importance=np.array(doc["raw_importance"], dtype=float),
            oob_score=float("nan") if oob is None else float(oob),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "Forest":
        path = Path(path)
        if not path.is_file():
            raise FormatError(f"model file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON: {exc}") from None
        return cls.from_dict(doc)


def encode_response(table: SampleTable):
    """Return ``(y_float, class_codes, classes)`` for the tree kernels."""
    if table.task is Task.CLASSIFICATION:
        classes = tuple(table.labels)
        lookup = {c: i for i, c in enumerate(classes)}
        codes = np.array([lookup[r] for r in table.response], dtype=np.int64)
        return codes.astype(float), codes, classes
    y = np.asarray(table.response, dtype=float)
    return y, np.zeros(len(y), dtype=np.int64), ()


def train(table: SampleTable, config: ForestConfig, jobs: int = 1, oob: bool = True) -> Forest:
    """Grow ``config.n_trees`` trees on bootstrap samples of ``table``.

    ``oob=False`` skips the out-of-bag score (left as NaN).
    """
    if len(table) < 2:
        raise ConfigError("training needs at least two rows")
    if table.n_features < 1:
        raise ConfigError("training needs at least one feature")
    config = config.resolved(table.n_features, table.task)
    y, codes, classes = encode_response(table)
    if table.task is Task.CLASSIFICATION and len(classes) < 2:
        raise DegenerateResponseError(f"classification needs >= 2 classes, found {list(classes)}")
    X = np.ascontiguousarray(table.features, dtype=float)
    n_classes = len(classes)
    seeds = tree_seeds(config.seed, config.n_trees)

    def grow(seed):
        return _grow(X, y, codes, n_classes, config.mtry, config.min_node_size, seed)

    grown = parallel_map(grow, seeds, jobs)
    trees = [t for t, _ in grown]
    raw = np.zeros(table.n_features)
    for _, imp in grown:
        raw += imp
    forest = Forest(trees, config, table.feature_names, table.task, classes, raw)
    if oob:
        forest.oob_score = _oob_score(forest, X, y, codes)
    return forest


def oob_predictions(forest: Forest, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Out-of-bag prediction per training row and the number of OOB trees."""
    n = X.shape[0]
    n_oob = np.zeros(n, dtype=np.int64)
    if forest.is_classification:
        votes = np.zeros((n, len(forest.classes)), dtype=np.int64)
    else:
        total = np.zeros(n)
    for tree in forest.trees:
        oob = np.flatnonzero(tree.inbag == 0)
        if not len(oob):
            continue
        n_oob[oob] += 1
        p = tree.predict_values(X[oob], forest.is_classification)
        if forest.is_classification:
            votes[oob, p.astype(np.int64)] += 1
        else:
            total[oob] += p
    with np.errstate(invalid="ignore", divide="ignore"):
        if forest.is_classification:
            pred = votes.argmax(axis=1).astype(float)
            pred[n_oob == 0] = np.nan
        else:
            pred = total / n_oob
    return pred, n_oob


def _oob_score(forest: Forest, X, y, codes) -> float:
    from .metrics import r_squared

    pred, n_oob = oob_predictions(forest, X)
    have = n_oob > 0
    if not have.any():
        return float("nan")
    if forest.is_classification:
        return float(np.mean(pred[have] == codes[have]))
    try:
        return r_squared(y[have], pred[have])
    except ValueError:
        return float("nan")


def importance_ranking(model: Forest) -> list[tuple[str, float]]:
    return model.importance_ranking()


def predict(model: Forest, row) -> object:
    """Predict a single feature vector."""
    row = np.asarray(row, dtype=float)
    if row.ndim != 1:
        raise FeatureMismatchError("predict expects one feature vector")
    return model.predict(row[None, :])[0]
