from __future__ import annotations

import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from honeycast.core import FeatureMatrix
from honeycast.evaluate import (SearchSpace, compute_metrics, kfold_indices, metric_histograms,
                                per_hive_metric_distribution, random_search_cv,
                                split_indices_by_history)
from honeycast.models import fit_linear_ols
from oracles import metrics_by_hand


@pytest.mark.parametrize("y,yh", [
    ([2, 4], [1, 5]),
    ([1, 2, 3], [1, 2, 4]),
    ([3, -1, 2, 5], [2.5, 0, 2, 4]),
    ([10, 20, 30, 40, 50], [12, 18, 33, 39, 47]),
])
def test_metrics_match_hand_computation(y, yh):
    r = compute_metrics(y, yh)
    r2, mse, mape = metrics_by_hand(y, yh)
    assert abs(r.r_squared - r2) <= 1e-12
    assert abs(r.mse - mse) <= 1e-12
    assert abs(r.mape - mape) <= 1e-12


def test_mape_example():
    assert compute_metrics([2, 4], [1, 5]).mape == pytest.approx(37.5, abs=1e-12)


def test_perfect_and_mean_predictions():
    y = np.array([1.0, 2.0, 4.0])
    assert compute_metrics(y, y).r_squared == 1.0
    assert compute_metrics(y, np.full(3, y.mean())).r_squared == pytest.approx(0.0, abs=1e-15)


def test_zero_variance_target():
    r = compute_metrics([2, 2, 2], [1, 2, 3])
    assert math.isnan(r.r_squared) and r.error
    assert r.to_dict()["r_squared"] is None


def test_mape_excludes_near_zero_targets():
    r = compute_metrics([0.0, 2.0], [1.0, 1.0])
    assert r.n_excluded_mape == 1 and r.mape == pytest.approx(50.0)


def test_metric_input_errors():
    with pytest.raises(ValueError):
        compute_metrics([1, 2], [1])
    with pytest.raises(ValueError):
        compute_metrics([1], [1])


@given(st.lists(st.integers(1, 30), min_size=1, max_size=8),
       st.sampled_from([0.5, 0.7, 0.8, 0.9]))
def test_history_split_is_chronological_per_hive(sizes, frac):
    hives, dates = [], []
    for h, n in enumerate(sizes):
        hives += [f"h{h}"] * n
        dates += list(pd.date_range("2021-01-01", periods=n).to_numpy()[::-1])
    hives = np.array(hives, dtype=object)
    dates = np.array(dates, dtype="datetime64[D]")
    tr, te = split_indices_by_history(hives, dates, frac)
    assert len(np.intersect1d(tr, te)) == 0 and len(tr) + len(te) == len(hives)
    for h, n in enumerate(sizes):
        a = tr[hives[tr] == f"h{h}"]
        b = te[hives[te] == f"h{h}"]
        assert len(a) == math.ceil(frac * n - 1e-9)
        if len(b):
            assert dates[a].max() < dates[b].min()


def test_split_of_exact_products():
    hives = np.array(["a"] * 10, dtype=object)
    dates = np.arange(10).astype("datetime64[D]")
    tr, te = split_indices_by_history(hives, dates, 0.7)
    assert len(tr) == 7


@given(st.lists(st.integers(1, 40), min_size=1, max_size=6), st.integers(2, 6),
       st.integers(0, 100))
def test_kfold_partition_and_balance(sizes, k, seed):
    hives = np.concatenate([[f"h{i}"] * n for i, n in enumerate(sizes)]).astype(object)
    if len(hives) < k:
        return
    folds = kfold_indices(hives, k, seed)
    allidx = np.sort(np.concatenate(folds))
    assert np.array_equal(allidx, np.arange(len(hives)))
    sizes_f = [len(f) for f in folds]
    assert max(sizes_f) - min(sizes_f) <= 1
    for i, n in enumerate(sizes):
        per = [int((hives[f] == f"h{i}").sum()) for f in folds]
        assert max(per) - min(per) <= 1


def test_search_space_sampling():
    sp = SearchSpace({"a": [1, 2, 3], "b": [10, 20]}, n_iterations=100, seed=0)
    assert sp.size == 6 and sp.n_trials == 6
    combos = sp.sample()
    assert sorted(map(lambda d: (d["a"], d["b"]), combos)) == sorted(
        (d["a"], d["b"]) for d in sp.grid())
    assert SearchSpace({"a": [1, 2, 3]}, 2, seed=5).sample() == SearchSpace({"a": [1, 2, 3]}, 2, seed=5).sample()
    with pytest.raises(ValueError):
        SearchSpace({"a": []})


def _matrix(n_hives=6, n=40, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n_hives * n, 3))
    y = np.where(X[:, 0] > 0, 1.0, -1.0) + 0.1 * rng.normal(size=len(X))
    hives = np.repeat([f"h{i}" for i in range(n_hives)], n).astype(object)
    dates = np.tile(np.arange(n), n_hives).astype("datetime64[D]")
    return FeatureMatrix(X, y, ("a", "b", "c"), hives, dates)


def test_random_search_deterministic_and_workers_independent():
    m = _matrix()
    sp = SearchSpace({"n_rounds": [5, 20], "eta": [0.1, 0.3], "max_depth": [1, 2],
                      "min_child_weight": [1]}, n_iterations=5, seed=3)
    a = random_search_cv(m, "gbt", sp, k=3)
    b = random_search_cv(m, "gbt", sp, k=3, n_jobs=3)
    assert a.to_frame().equals(b.to_frame())
    assert a.best_params == b.best_params
    assert a.best_score == min(t.mean_cv_mse for t in a.trials)
    assert len(a.trials) == 5


def test_random_search_subsample():
    m = _matrix()
    sp = SearchSpace({"n_trees": [3], "min_samples_leaf": [1, 5]}, 2, seed=1)
    res = random_search_cv(m, "rf", sp, k=3, max_rows=100)
    assert res.meta["n_rows"] == 100


def test_per_hive_distribution():
    m = _matrix()
    model = fit_linear_ols(m.X, m.y, m.feature_names)
    reports, hist = per_hive_metric_distribution(model, m, bins=5)
    assert len(reports) == 6
    assert set(hist["metric"]) == {"r_squared", "mse", "mape"}
    assert hist.groupby("metric")["count"].sum().eq(6).all()
    assert metric_histograms([], 5).empty
