import json

import numpy as np
import pytest

from conftest import make_table
from spatialrf import metrics as M
from spatialrf.cv import TuneGrid, cross_validate, default_mtry_grid, default_objective, refit
from spatialrf.errors import ConfigError, FoldDegeneracyError
from spatialrf.folds import cluster_folds, random_folds
from spatialrf.forest import ForestConfig

CFG = ForestConfig(n_trees=25, seed=1)


def _rule_table(task="classification"):
    rng = np.random.default_rng(8)
    f = rng.normal(size=(120, 3))
    groups = np.repeat(np.arange(6), 20)
    xy = rng.uniform(0, 100, size=(120, 2))
    if task == "classification":
        response = np.where(f[:, 0] > 0, "pos", "neg").astype(object)
    else:
        response = f[:, 0].copy()
    return make_table(f, response, task=task, groups=groups, xy=xy)


def test_noiseless_rule_scores_high_with_any_mtry():
    table = _rule_table()
    plan = random_folds(table, 5, seed=0)
    for m in (1, 2, 3):
        report = cross_validate(table, plan, CFG, [m])
        assert report.metric("accuracy") >= 0.95


def test_report_contents():
    table = _rule_table("regression")
    plan = cluster_folds(table)
    report = cross_validate(table, plan, CFG, [1, 3])
    assert report.objective == "rmse"
    assert report.chosen_mtry in (1, 3)
    assert {(m.name, m.scope) for m in report.metrics} == {
        ("rmse", M.PER_FOLD_MEAN), ("rmse", M.GLOBAL), ("r2", M.PER_FOLD_MEAN), ("r2", M.GLOBAL)
    }
    assert [h[0] for h in report.held_out] == table.ids.tolist()
    assert [h[1] for h in report.held_out] == plan.assignment.tolist()
    # chosen mtry has the best per-fold objective in the tuning table
    scores = {t["mtry"]: t["objective"] for t in report.tuning}
    assert scores[report.chosen_mtry] == min(scores.values())
    assert report.summary_line().startswith("cluster rmse=")


def test_metrics_recompute_from_held_out_predictions():
    table = _rule_table("regression")
    plan = cluster_folds(table)
    report = cross_validate(table, plan, CFG, [2])
    folds = {}
    for _, f, o, p in report.held_out:
        folds.setdefault(f, ([], []))
        folds[f][0].append(o)
        folds[f][1].append(p)
    per_fold = np.mean([M.rmse(o, p) for o, p in folds.values()])
    assert report.metric("rmse") == pytest.approx(per_fold, abs=1e-12)
    pooled = M.rmse([h[2] for h in report.held_out], [h[3] for h in report.held_out])
    assert report.metric("rmse", M.GLOBAL) == pytest.approx(pooled, abs=1e-12)


def test_held_out_responses_never_reach_training():
    # scrambling the responses of one fold leaves that fold's predictions alone
    table = _rule_table("regression")
    plan = cluster_folds(table)
    base = cross_validate(table, plan, CFG, [2])
    y = np.asarray(table.response, dtype=float).copy()
    fold0 = plan.assignment == 0
    y[fold0] = 1e6 * np.arange(fold0.sum())
    scrambled = make_table(table.features, y, groups=table.groups, xy=np.column_stack([table.x, table.y]))
    other = cross_validate(scrambled, plan, CFG, [2])
    preds = lambda r: [h[3] for h in r.held_out if h[1] == 0]
    assert preds(base) == preds(other)


def test_group_identity_feature_does_not_transfer_across_clusters():
    # the response is a per-cluster constant and the only feature is the
    # cluster id: random folds look perfect, cluster folds cannot predict
    groups = np.repeat(np.arange(8), 10)
    response = np.repeat(np.arange(8) * 10.0, 10)
    table = make_table(groups[:, None].astype(float), response, groups=groups)
    rnd = cross_validate(table, random_folds(table, 5, 0), CFG, [1])
    clu = cross_validate(table, cluster_folds(table), CFG, [1])
    assert rnd.metric() < 1.0
    assert clu.metric() >= 10.0  # at best a neighbouring cluster's value


def test_determinism_across_jobs():
    table = _rule_table()
    plan = cluster_folds(table)
    a = cross_validate(table, plan, CFG, [1, 2, 3], jobs=1)
    b = cross_validate(table, plan, CFG, [1, 2, 3], jobs=8)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())


def test_single_class_training_partition():
    f = np.arange(6.0)[:, None]
    labels = np.array(["a", "a", "a", "b", "b", "b"], dtype=object)
    table = make_table(f, labels, task="classification", groups=[0, 0, 0, 1, 1, 1])
    with pytest.raises(FoldDegeneracyError) as err:
        cross_validate(table, cluster_folds(table), CFG, [1])
    assert err.value.fold in (0, 1)


def test_grid_validation():
    with pytest.raises(ConfigError):
        TuneGrid(())
    with pytest.raises(ConfigError):
        TuneGrid((3, 2))
    table = _rule_table()
    with pytest.raises(ConfigError):
        cross_validate(table, cluster_folds(table), CFG, [4])
    with pytest.raises(ConfigError):
        cross_validate(table, cluster_folds(table), CFG, [1], objective="rmse")
    with pytest.raises(ConfigError):
        cross_validate(table, random_folds(table.subset(np.arange(50)), 5), CFG, [1])


def test_default_grid_and_objective():
    assert default_mtry_grid(2).mtry_values == (2,)
    assert default_mtry_grid(7).mtry_values == (2, 3, 4, 5, 6, 7)
    assert len(default_mtry_grid(30)) == 8
    assert default_mtry_grid(30).mtry_values[-1] == 30
    assert default_objective("classification") == "kappa"
    assert default_objective("regression") == "rmse"


def test_tie_goes_to_smaller_mtry():
    # a single informative feature duplicated: every mtry gives the same trees
    f = np.tile(np.arange(40.0)[:, None], (1, 3))
    table = make_table(f, np.arange(40.0), groups=np.arange(40) // 8)
    report = cross_validate(table, cluster_folds(table), CFG, [1, 2, 3])
    assert len({t["objective"] for t in report.tuning}) == 1
    assert report.chosen_mtry == 1


def test_outputs_written(tmp_path):
    table = _rule_table()
    report = cross_validate(table, cluster_folds(table), CFG, [2])
    report.write_json(tmp_path / "r.json")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert "wall_time" not in doc and doc["objective"] == "kappa"
    report.write_held_out_csv(tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text().splitlines()[0] == "id,fold,observed,predicted"
    model = refit(table, CFG, 2)
    assert model.config.mtry == 2 and len(model.trees) == 25
