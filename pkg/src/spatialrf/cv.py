"""Cross-validation of forests over fold plans, with mtry tuning."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import metrics as M
from ._parallel import parallel_map
from .errors import ConfigError, FoldDegeneracyError, UndefinedMetricError
from .folds import FoldPlan
from .forest import Forest, ForestConfig, train
from .samples import SampleTable, Task

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TuneGrid:
    mtry_values: tuple

    def __post_init__(self):
        values = tuple(int(v) for v in self.mtry_values)
        if not values:
            raise ConfigError("tuning grid must be non-empty")
        if list(values) != sorted(set(values)):
            raise ConfigError(f"tuning grid must be strictly ascending, got {values}")
        object.__setattr__(self, "mtry_values", values)

    def check(self, n_features: int) -> None:
        bad = [v for v in self.mtry_values if not 1 <= v <= n_features]
        if bad:
            raise ConfigError(f"mtry values {bad} outside [1, {n_features}]")

    def __iter__(self):
        return iter(self.mtry_values)

    def __len__(self):
        return len(self.mtry_values)


def default_mtry_grid(n_features: int, max_values: int = 8) -> TuneGrid:
    """``2 .. n_features`` thinned to at most ``max_values`` evenly spaced values."""
    if n_features < 2:
        raise ConfigError(f"default mtry grid needs >= 2 features, got {n_features}")
    count = min(max_values, n_features - 1)
    values = np.unique(np.round(np.linspace(2, n_features, count)).astype(int))
    return TuneGrid(tuple(int(v) for v in values))


def default_objective(task) -> str:
    return "kappa" if Task.parse(task) is Task.CLASSIFICATION else "rmse"


@dataclass
class CvReport:
    plan: dict
    objective: str
    chosen_mtry: int
    metrics: list
    held_out: list  # (id, fold, observed, predicted), table row order
    tuning: list
    config: dict
    feature_names: tuple
    task: str
    wall_time: float = field(default=0.0, compare=False)

    def metric(self, name: str | None = None, scope: str = M.PER_FOLD_MEAN) -> float:
        return M.lookup(self.metrics, name or self.objective, scope)

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "task": self.task,
            "plan": self.plan,
            "objective": self.objective,
            "chosen_mtry": self.chosen_mtry,
            "feature_names": list(self.feature_names),
            "config": self.config,
            "metrics": [m.to_dict() for m in self.metrics],
            "tuning": self.tuning,
            "held_out": [
                {"id": i, "fold": f, "observed": o, "predicted": p} for i, f, o, p in self.held_out
            ],
        }
        if include_timing:
            out["wall_time"] = self.wall_time
        return out

    def write_json(self, path, include_timing: bool = False) -> None:
        with open(path, "w") as fh:
            json.dump(_jsonable(self.to_dict(include_timing)), fh, indent=2)
            fh.write("\n")

    def write_held_out_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "fold", "observed", "predicted"])
            for i, f, o, p in self.held_out:
                w.writerow([i, f, o if isinstance(o, str) else repr(o), p if isinstance(p, str) else repr(p)])

    def summary_line(self) -> str:
        per_fold = self.metric(self.objective, M.PER_FOLD_MEAN)
        pooled = self.metric(self.objective, M.GLOBAL)
        return f"{self.plan['strategy']} {self.objective}={per_fold:.4f} (per-fold) / {pooled:.4f} (global)"


def _jsonable(obj):
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def _fold_job(table: SampleTable, plan: FoldPlan, config: ForestConfig, mtry: int, fold: int):
    train_idx, test_idx = plan.split(fold)
    train_table = table.subset(train_idx)
    if table.task is Task.CLASSIFICATION and len(set(train_table.response.tolist())) < 2:
        raise FoldDegeneracyError(
            f"training partition for fold {fold} contains a single class", fold=fold
        )
    model = train(train_table, replace(config, mtry=mtry), oob=False)
    predicted = model.predict(table.features[test_idx])
    # audit: the validation fold never appears in its own training partition
    assert not np.any(plan.assignment[train_idx] == fold)
    return test_idx, predicted


def cross_validate(
    table: SampleTable,
    plan: FoldPlan,
    config: ForestConfig,
    grid: TuneGrid | Sequence[int] | None = None,
    objective: str | None = None,
    jobs: int = 1,
) -> CvReport:
    """Train on all folds but one, predict the held-out fold, for every mtry.

    The mtry with the best per-fold-mean ``objective`` wins (ties go to the
    smaller mtry); the report's metrics and held-out predictions come from
    that mtry's runs, without a refit on the full table.
    """
    start = time.perf_counter()
    plan.check_covers(table)
    p = table.n_features
    if grid is None:
        grid = default_mtry_grid(p) if p >= 2 else TuneGrid((1,))
    elif not isinstance(grid, TuneGrid):
        grid = TuneGrid(tuple(grid))
    grid.check(p)
    objective = objective or default_objective(table.task)
    names = M.metrics_for(table.task)
    if objective not in names:
        raise ConfigError(f"objective {objective!r} is not a {table.task.value} metric {names}")

    cells = [(m, f) for m in grid for f in range(plan.k)]
    results = parallel_map(lambda c: _fold_job(table, plan, config, c[0], c[1]), cells, jobs)
    by_cell = dict(zip(cells, results))

    observed = table.response
    best = None
    tuning = []
    runs = {}
    for m in grid:
        per_fold = []
        for f in range(plan.k):
            test_idx, predicted = by_cell[(m, f)]
            per_fold.append((f, observed[test_idx].tolist(), list(predicted)))
        values = M.aggregate(per_fold, names)
        score = M.lookup(values, objective, M.PER_FOLD_MEAN)
        if not np.isfinite(score):
            log.warning("mtry=%d: %s is undefined in every fold", m, objective)
            tuning.append({"mtry": m, "objective": None})
            continue
        tuning.append({"mtry": m, "objective": score, "objective_global": M.lookup(values, objective, M.GLOBAL)})
        runs[m] = values
        if best is None or M.better(objective, score, best[1]):
            best = (m, score)
    if best is None:
        raise UndefinedMetricError(f"{objective} is undefined for every mtry")
    chosen = best[0]

    held_out = [None] * len(table)
    for f in range(plan.k):
        test_idx, predicted = by_cell[(chosen, f)]
        for i, pred in zip(test_idx, predicted):
            obs = observed[i]
            held_out[i] = (
                int(table.ids[i]),
                int(f),
                obs if table.task is Task.CLASSIFICATION else float(obs),
                pred if table.task is Task.CLASSIFICATION else float(pred),
            )
    resolved = config.resolved(p, table.task)
    return CvReport(
        plan=plan.summary(),
        objective=objective,
        chosen_mtry=chosen,
        metrics=runs[chosen],
        held_out=held_out,
        tuning=tuning,
        config={
            "n_trees": resolved.n_trees,
            "min_node_size": resolved.min_node_size,
            "seed": resolved.seed,
            "grid": list(grid.mtry_values),
        },
        feature_names=table.feature_names,
        task=table.task.value,
        wall_time=time.perf_counter() - start,
    )


def refit(table: SampleTable, config: ForestConfig, mtry: int, jobs: int = 1) -> Forest:
    """Full-table model at a fixed mtry; independent of any fold plan."""
    return train(table, replace(config, mtry=mtry), jobs=jobs)
