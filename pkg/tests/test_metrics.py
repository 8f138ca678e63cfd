import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spatialrf import metrics as M
from spatialrf.errors import ConfigError, UndefinedMetricError


def test_kappa_and_accuracy_hand_computed():
    cm = M.ConfusionMatrix.from_counts([[20, 5], [10, 15]])
    # po = 35/50, pe = (25*30 + 25*20) / 2500 = 0.5
    assert M.kappa(cm) == pytest.approx(0.4, abs=1e-12)
    assert M.accuracy(cm) == pytest.approx(0.7, abs=1e-12)


def test_rmse_and_r2_hand_computed():
    assert M.rmse([1, 2, 3], [2, 2, 2]) == pytest.approx(math.sqrt(2 / 3), abs=1e-12)
    # Pearson r of (1,2,3,4) and (1,2,4,3) is 0.8
    assert M.r_squared([1, 2, 3, 4], [1, 2, 4, 3]) == pytest.approx(0.64, abs=1e-12)


def test_per_fold_mean_differs_from_pooled():
    folds = [(0, [0.0], [1.0]), (1, [0.0], [3.0])]
    values = M.aggregate(folds, ["rmse"])
    assert M.lookup(values, "rmse", M.PER_FOLD_MEAN) == pytest.approx(2.0, abs=1e-12)
    assert M.lookup(values, "rmse", M.GLOBAL) == pytest.approx(math.sqrt(5.0), abs=1e-12)


def test_perfect_agreement():
    labels = ["a", "b", "c", "a", "b"]
    assert M.compute("accuracy", labels, labels) == 1.0
    assert M.compute("kappa", labels, labels) == 1.0
    assert M.compute("rmse", [1.0, 2.0], [1.0, 2.0]) == 0.0


def test_kappa_undefined_for_single_class():
    with pytest.raises(UndefinedMetricError):
        M.compute("kappa", ["a", "a"], ["a", "a"])


def test_r2_undefined_for_constant_predictions():
    with pytest.raises(UndefinedMetricError):
        M.r_squared([1.0, 2.0, 3.0], [2.0, 2.0, 2.0])
    with pytest.raises(UndefinedMetricError):
        M.compute("r2", [1.0], [1.0])


def test_length_mismatch_is_rejected():
    with pytest.raises(ConfigError):
        M.rmse([1.0, 2.0], [1.0])
    with pytest.raises(ConfigError):
        M.ConfusionMatrix.from_labels(["a"], ["a", "b"])


def test_unknown_metric():
    with pytest.raises(ConfigError):
        M.compute("auc", [1], [1])
    with pytest.raises(ConfigError):
        M.metrics_for("ranking")


def test_aggregate_skips_undefined_folds():
    folds = [(0, ["a", "a"], ["a", "a"]), (1, ["a", "b"], ["a", "b"])]
    values = M.aggregate(folds, ["kappa", "accuracy"])
    kappa = [v for v in values if v.name == "kappa" and v.scope == M.PER_FOLD_MEAN][0]
    assert kappa.value == 1.0
    assert kappa.n_skipped == 1 and kappa.n_folds == 2
    assert M.lookup(values, "accuracy") == 1.0


def test_aggregate_all_folds_undefined():
    values = M.aggregate([(0, ["a"], ["a"])], ["kappa", "accuracy"])
    assert math.isnan(M.lookup(values, "kappa"))
    assert M.lookup(values, "accuracy") == 1.0


def test_better_respects_direction():
    assert M.better("rmse", 0.1, 0.2)
    assert M.better("kappa", 0.3, 0.2)
    assert not M.better("r2", 0.2, 0.2)


labels = st.lists(st.sampled_from("abc"), min_size=2, max_size=40)


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_kappa_bounds_and_symmetry(data):
    obs = data.draw(labels)
    pred = data.draw(st.lists(st.sampled_from("abc"), min_size=len(obs), max_size=len(obs)))
    acc = M.compute("accuracy", obs, pred)
    assert 0.0 <= acc <= 1.0
    try:
        k = M.compute("kappa", obs, pred)
    except UndefinedMetricError:
        return
    assert -1.0 - 1e-12 <= k <= 1.0 + 1e-12
    # swapping the roles of reference and prediction transposes the matrix
    assert M.compute("kappa", pred, obs) == pytest.approx(k, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=30), st.floats(0.1, 10), st.floats(-5, 5))
def test_r2_invariant_under_affine_predictions(obs, scale, shift):
    obs = np.asarray(obs)
    pred = obs + np.sin(np.arange(len(obs)))
    try:
        r2 = M.r_squared(obs, pred)
    except UndefinedMetricError:
        return
    assert 0.0 <= r2 <= 1.0
    assert M.r_squared(obs, scale * pred + shift) == pytest.approx(r2, rel=1e-6, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(st.floats(-100, 100), min_size=1, max_size=10), min_size=1, max_size=6))
def test_equal_fold_sizes_pooled_rmse_bounds_mean(folds):
    # by the power-mean inequality the pooled RMSE of equal-sized folds is
    # at least their mean RMSE
    size = len(folds[0])
    folds = [f[:size] + [0.0] * (size - len(f)) for f in folds]
    per_fold = [(i, [0.0] * size, f) for i, f in enumerate(folds)]
    values = M.aggregate(per_fold, ["rmse"])
    assert M.lookup(values, "rmse", M.GLOBAL) >= M.lookup(values, "rmse") - 1e-9
