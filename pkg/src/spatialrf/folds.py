"""Fold plans for random, spatial-block and leave-one-cluster-out CV."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, DegeneratePartitionError
from .samples import SampleTable

RANDOM = "random"
SPATIAL_BLOCK = "spatial_block"
CLUSTER = "cluster"
STRATEGIES = (RANDOM, SPATIAL_BLOCK, CLUSTER)


@dataclass(frozen=True)
class BlockGeometry:
    x_origin: float
    y_origin: float
    block_width: float
    block_height: float
    n_cols: int
    n_rows: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True, eq=False)
class FoldPlan:
    """Assignment of every table row to one of ``k`` validation folds.

    ``assignment[i]`` is the fold of row ``i``; ``ids`` echoes the sample ids
    so a plan can be audited or re-applied to a permuted table.
    """

    k: int
    assignment: np.ndarray
    ids: np.ndarray
    strategy: str
    block_geometry: Optional[BlockGeometry] = None

    def __post_init__(self):
        a = np.array(self.assignment, dtype=np.int64)
        a.setflags(write=False)
        ids = np.array(self.ids, dtype=np.int64)
        ids.setflags(write=False)
        object.__setattr__(self, "assignment", a)
        object.__setattr__(self, "ids", ids)
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown fold strategy {self.strategy!r}")
        if self.k < 2:
            raise ConfigError(f"a fold plan needs k >= 2, got {self.k}")
        if len(a) != len(ids):
            raise ConfigError("assignment and ids differ in length")
        if len(a) and (a.min() < 0 or a.max() >= self.k):
            raise ConfigError("fold index out of range")
        if len(np.unique(a)) != self.k:
            raise ConfigError("every fold must be non-empty")

    def __len__(self) -> int:
        return len(self.assignment)

    def fold_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """Row indices ``(train, test)`` for validation fold ``fold``."""
        test = self.assignment == fold
        return np.flatnonzero(~test), np.flatnonzero(test)

    def check_covers(self, table: SampleTable) -> None:
        if len(table) != len(self) or not np.array_equal(table.ids, self.ids):
            raise ConfigError("fold plan does not match the sample table")

    def summary(self) -> dict:
        out = {"strategy": self.strategy, "k": self.k, "fold_sizes": self.fold_sizes().tolist()}
        if self.block_geometry is not None:
            out["block_geometry"] = self.block_geometry.to_dict()
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "fold"])
            for i, f in zip(self.ids, self.assignment):
                w.writerow([int(i), int(f)])


def random_folds(table: SampleTable, k: int, seed: int = 0) -> FoldPlan:
    """Random k-fold split with fold sizes differing by at most one.

    The permutation is drawn over sample ids in sorted order, so the
    assignment does not depend on row order.
    """
    n = len(table)
    if not 2 <= k <= n:
        raise ConfigError(f"random folds need 2 <= k <= n ({n}), got k={k}")
    order = np.argsort(table.ids, kind="stable")
    perm = np.random.default_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    # position in the shuffled id list, modulo k
    assignment[order[perm]] = np.arange(n) % k
    return FoldPlan(k, assignment, table.ids, RANDOM)


def spatial_block_folds(table: SampleTable, n_block_cols: int, n_block_rows: int) -> FoldPlan:
    """Folds from an equal-size block grid over the samples' bounding box.

    Each group goes to the block holding most of its samples (ties toward the
    lower block index); blocks are numbered row-major from the south-west
    corner. Empty blocks are dropped and fold indices compacted.
    """
    if n_block_cols < 1 or n_block_rows < 1:
        raise ConfigError("block grid needs at least one column and one row")
    if len(table) == 0:
        raise DegeneratePartitionError("cannot block an empty table")
    x0, x1 = float(table.x.min()), float(table.x.max())
    y0, y1 = float(table.y.min()), float(table.y.max())
    width = (x1 - x0) / n_block_cols or 1.0
    height = (y1 - y0) / n_block_rows or 1.0
    col = np.clip(np.floor((table.x - x0) / width).astype(np.int64), 0, n_block_cols - 1)
    row = np.clip(np.floor((table.y - y0) / height).astype(np.int64), 0, n_block_rows - 1)
    block = row * n_block_cols + col

    n_blocks = n_block_cols * n_block_rows
    group_block = {}
    for g in np.unique(table.groups):
        counts = np.bincount(block[table.groups == g], minlength=n_blocks)
        group_block[int(g)] = int(np.argmax(counts))
    sample_block = np.array([group_block[int(g)] for g in table.groups], dtype=np.int64)
    used = np.unique(sample_block)
    if len(used) < 2:
        raise DegeneratePartitionError(
            f"only {len(used)} non-empty block(s) in a {n_block_cols}x{n_block_rows} grid"
        )
    assignment = np.searchsorted(used, sample_block)
    geometry = BlockGeometry(x0, y0, width, height, n_block_cols, n_block_rows)
    return FoldPlan(len(used), assignment, table.ids, SPATIAL_BLOCK, geometry)


def cluster_folds(table: SampleTable) -> FoldPlan:
    """Leave-one-cluster-out: one fold per group, numbered by dense rank."""
    groups, assignment = np.unique(table.groups, return_inverse=True)
    if len(groups) < 2:
        raise ConfigError("cluster folds need at least two distinct groups")
    return FoldPlan(len(groups), assignment, table.ids, CLUSTER)


def make_plan(table: SampleTable, strategy: str, k: int = 10, seed: int = 0,
              block_cols: int = 5, block_rows: int = 4) -> FoldPlan:
    """Build a plan by strategy name (the CLI and selection entry point)."""
    if strategy == RANDOM:
        return random_folds(table, k, seed)
    if strategy == SPATIAL_BLOCK:
        return spatial_block_folds(table, block_cols, block_rows)
    if strategy == CLUSTER:
        return cluster_folds(table)
    raise ConfigError(f"unknown fold strategy {strategy!r}; expected one of {STRATEGIES}")
