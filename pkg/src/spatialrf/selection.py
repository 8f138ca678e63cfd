"""Forward feature selection and recursive feature elimination over CV folds."""

from __future__ import annotations

import csv
import itertools
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence, Union

import numpy as np

from . import metrics as M
from ._parallel import parallel_map
from .cv import CvReport, TuneGrid, cross_validate, default_mtry_grid, default_objective
from .errors import ConfigError, DegeneracyError, SelectionFailureError
from .folds import FoldPlan
from .forest import ForestConfig, train
from .samples import SampleTable

log = logging.getLogger(__name__)

EPSILON = 1e-6
SELECTION_MTRY = 2

PlanSource = Union[FoldPlan, Callable[[SampleTable], FoldPlan]]


@dataclass(frozen=True)
class SelectionStep:
    stage: int
    features: tuple
    objective: float | None
    accepted: bool


@dataclass
class SelectionTrace:
    method: str
    plan_strategy: str
    objective: str
    steps: list = field(default_factory=list)
    final_features: tuple = ()
    epsilon: float = EPSILON

    def accepted_steps(self) -> list[SelectionStep]:
        return [s for s in self.steps if s.accepted]

    def stage_counts(self) -> dict:
        counts: dict = {}
        for s in self.steps:
            counts[s.stage] = counts.get(s.stage, 0) + 1
        return counts

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "plan_strategy": self.plan_strategy,
            "objective": self.objective,
            "epsilon": self.epsilon,
            "final_features": list(self.final_features),
            "steps": [
                {
                    "step": i,
                    "stage": s.stage,
                    "features": list(s.features),
                    "objective": s.objective,
                    "accepted": s.accepted,
                }
                for i, s in enumerate(self.steps)
            ],
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "stage", "features", "objective", "accepted"])
            for i, s in enumerate(self.steps):
                w.writerow([
                    i, s.stage, ";".join(s.features),
                    "" if s.objective is None else repr(s.objective), int(s.accepted),
                ])


def _resolve_plan(table: SampleTable, plan: PlanSource) -> FoldPlan:
    return plan(table) if callable(plan) else plan


def _improves(objective: str, new: float, old: float, epsilon: float) -> bool:
    if objective in M.LOWER_IS_BETTER:
        return new < old - epsilon
    return new > old + epsilon


def _evaluate(table, plan, config, features, objective, mtry) -> float | None:
    sub = table.select_features(features)
    try:
        report = cross_validate(sub, plan, config, TuneGrid((min(mtry, len(features)),)), objective)
    except DegeneracyError as exc:
        log.info("candidate %s is degenerate: %s", features, exc)
        return None
    return report.metric(objective)


def _best(objective: str, scores: Sequence[float | None]) -> int | None:
    best = None
    for i, s in enumerate(scores):
        if s is None or not np.isfinite(s):
            continue
        if best is None or M.better(objective, s, scores[best]):
            best = i
    return best


def forward_feature_selection(
    table: SampleTable,
    plan: PlanSource,
    config: ForestConfig,
    objective: str | None = None,
    epsilon: float = EPSILON,
    mtry: int = SELECTION_MTRY,
    jobs: int = 1,
) -> SelectionTrace:
    """Greedy forward selection driven by cross-validated performance.

    All feature pairs are scored first and the best pair kept; then the
    remaining features are tried one at a time and the best addition is
    accepted only if it beats the incumbent by more than ``epsilon``.
    Models use a fixed ``mtry`` (2) throughout. Ties resolve to the earlier
    candidate in column order.
    """
    names = table.feature_names
    if len(names) < 2:
        raise ConfigError("forward feature selection needs at least two features")
    plan = _resolve_plan(table, plan)
    objective = objective or default_objective(table.task)
    trace = SelectionTrace("ffs", plan.strategy, objective, epsilon=epsilon)

    def score_all(cands):
        return parallel_map(lambda c: _evaluate(table, plan, config, c, objective, mtry), cands, jobs)

    pairs = [tuple(names[i] for i in c) for c in itertools.combinations(range(len(names)), 2)]
    scores = score_all(pairs)
    best = _best(objective, scores)
    if best is None:
        raise SelectionFailureError("every two-feature model was degenerate")
    for i, (cand, s) in enumerate(zip(pairs, scores)):
        trace.steps.append(SelectionStep(1, cand, s, i == best))
    incumbent, incumbent_score = pairs[best], scores[best]
    log.info("ffs stage 1: %s %s=%.5g", incumbent, objective, incumbent_score)

    stage = 2
    while len(incumbent) < len(names):
        remaining = [f for f in names if f not in incumbent]
        cands = [incumbent + (f,) for f in remaining]
        scores = score_all(cands)
        best = _best(objective, scores)
        accept = best is not None and _improves(objective, scores[best], incumbent_score, epsilon)
        for i, (cand, s) in enumerate(zip(cands, scores)):
            trace.steps.append(SelectionStep(stage, cand, s, accept and i == best))
        if not accept:
            break
        incumbent, incumbent_score = cands[best], scores[best]
        log.info("ffs stage %d: %s %s=%.5g", stage, incumbent, objective, incumbent_score)
        stage += 1
    trace.final_features = incumbent
    return trace


def _ranking(table: SampleTable, config: ForestConfig, mtry: int) -> list[str]:
    model = train(table, replace(config, mtry=min(mtry, table.n_features)), oob=False)
    return [name for name, _ in model.importance_ranking()]


def recursive_feature_elimination(
    table: SampleTable,
    plan: PlanSource,
    config: ForestConfig,
    objective: str | None = None,
    subset_sizes: Sequence[int] | None = None,
    epsilon: float = EPSILON,
    mtry: int = SELECTION_MTRY,
    jobs: int = 1,
) -> SelectionTrace:
    """Backward elimination by impurity importance.

    Within every fold the importance ranking comes from a forest trained on
    that fold's training partition only; each subset size keeps the top
    ranked features and is scored on the held-out fold. The smallest size
    within ``epsilon`` of the best score wins; the reported feature sets
    come from the ranking of a forest trained on the full table.
    """
    p = table.n_features
    if p < 2:
        raise ConfigError("recursive feature elimination needs at least two features")
    sizes = list(range(p, 1, -1)) if subset_sizes is None else [int(s) for s in subset_sizes]
    if not sizes or any(not 2 <= s <= p for s in sizes):
        raise ConfigError(f"subset sizes must lie in [2, {p}], got {sizes}")
    if sizes != sorted(set(sizes), reverse=True):
        raise ConfigError(f"subset sizes must be strictly descending, got {sizes}")
    plan = _resolve_plan(table, plan)
    plan.check_covers(table)
    objective = objective or default_objective(table.task)
    names = M.metrics_for(table.task)

    def fold_job(fold):
        train_idx, test_idx = plan.split(fold)
        part = table.subset(train_idx)
        try:
            ranking = _ranking(part, config, mtry)
        except DegeneracyError as exc:
            log.info("rfe fold %d degenerate: %s", fold, exc)
            return fold, None
        out = {}
        for s in sizes:
            keep = ranking[:s]
            model = train(part.select_features(keep), replace(config, mtry=min(mtry, s)), oob=False)
            cols = [table.feature_names.index(f) for f in keep]
            out[s] = model.predict(table.features[np.ix_(test_idx, cols)])
        return fold, (test_idx, out)

    fold_results = parallel_map(fold_job, range(plan.k), jobs)
    scores = []
    for s in sizes:
        per_fold = [
            (f, table.response[r[0]].tolist(), list(r[1][s])) for f, r in fold_results if r is not None
        ]
        try:
            scores.append(M.lookup(M.aggregate(per_fold, names), objective) if per_fold else None)
        except DegeneracyError:
            scores.append(None)
    valid = [s for s in scores if s is not None and np.isfinite(s)]
    if not valid:
        raise SelectionFailureError("every RFE subset was degenerate")
    best = min(valid) if objective in M.LOWER_IS_BETTER else max(valid)
    within = [
        i for i, s in enumerate(scores)
        if s is not None and np.isfinite(s) and abs(s - best) <= epsilon
    ]
    chosen = min(within, key=lambda i: sizes[i])

    full_ranking = _ranking(table, config, mtry)
    trace = SelectionTrace("rfe", plan.strategy, objective, epsilon=epsilon)
    for i, (s, score) in enumerate(zip(sizes, scores)):
        trace.steps.append(SelectionStep(i + 1, tuple(full_ranking[:s]), score, i == chosen))
    trace.final_features = tuple(full_ranking[: sizes[chosen]])
    return trace


def refit_selected(
    table: SampleTable,
    trace: SelectionTrace,
    plan: PlanSource,
    config: ForestConfig,
    grid: TuneGrid | Sequence[int] | None = None,
    objective: str | None = None,
    jobs: int = 1,
) -> CvReport:
    """Cross-validate the selected features with mtry tuned over 2..|selected|."""
    if not trace.final_features:
        raise ConfigError("selection trace has no final features")
    sub = table.select_features(trace.final_features)
    plan = _resolve_plan(sub, plan)
    if grid is None:
        grid = default_mtry_grid(sub.n_features) if sub.n_features >= 2 else TuneGrid((1,))
    return cross_validate(sub, plan, config, grid, objective or trace.objective, jobs=jobs)
