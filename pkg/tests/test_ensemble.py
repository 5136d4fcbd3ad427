from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from honeycast.models import (EnsembleModel, ForestParams, GbtParams, TreeParams,
                              fit_gradient_boosting, fit_linear_ols, fit_model, fit_random_forest,
                              fit_regression_tree, params_from_dict)


def fixture(seed, n=60, p=4):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    y = X[:, 0] * (X[:, 1] > 0) + 0.1 * rng.normal(size=n)
    return X, y


@given(st.integers(0, 10_000))
def test_forest_is_mean_of_trees(seed):
    X, y = fixture(seed)
    m = fit_random_forest(X, y, ForestParams(n_trees=5, min_samples_split=2, min_samples_leaf=1,
                                             max_depth=4), seed=seed)
    assert np.max(np.abs(m.predict(X) - m.tree_outputs(X).mean(axis=0))) <= 1e-12


@given(st.integers(0, 10_000))
def test_boosting_decomposition(seed):
    X, y = fixture(seed)
    m = fit_gradient_boosting(X, y, GbtParams(eta=0.3, max_depth=2, min_child_weight=1, n_rounds=7))
    direct = m.base_prediction + m.learning_rate * m.tree_outputs(X).sum(axis=0)
    assert np.max(np.abs(m.predict(X) - direct)) <= 1e-12
    assert m.base_prediction == pytest.approx(y.mean(), abs=1e-15)


def test_single_tree_forest_equals_tree():
    X, y = fixture(0)
    rf = fit_random_forest(X, y, ForestParams(n_trees=1, bootstrap=False, feature_subsample=None,
                                              max_depth=None, min_samples_split=2,
                                              min_samples_leaf=1))
    tree = fit_regression_tree(X, y, TreeParams())
    assert rf.trees[0].equals(tree)


def test_boosting_first_round_fits_residuals():
    X, y = fixture(1)
    m = fit_gradient_boosting(X, y, GbtParams(eta=0.5, max_depth=2, min_child_weight=1, n_rounds=1))
    ref = fit_regression_tree(X, y - y.mean(), TreeParams(max_depth=2))
    assert m.trees[0].equals(ref)


def test_boosting_train_error_decreases():
    X, y = fixture(2, n=200)
    errs = []
    fit_gradient_boosting(X, y, GbtParams(eta=0.1, max_depth=3, n_rounds=30, min_child_weight=1),
                          callback=lambda m, e: errs.append(e))
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))


def test_forest_worker_count_does_not_matter():
    X, y = fixture(3, n=300)
    p = ForestParams(n_trees=8, min_samples_split=2, min_samples_leaf=5)
    a = fit_random_forest(X, y, p, seed=7, n_jobs=1)
    b = fit_random_forest(X, y, p, seed=7, n_jobs=4)
    assert a.to_json() == b.to_json()


def test_forest_seed_changes_model():
    X, y = fixture(3, n=300)
    p = ForestParams(n_trees=3, min_samples_split=2, min_samples_leaf=1)
    assert fit_random_forest(X, y, p, seed=1).to_json() != fit_random_forest(X, y, p, seed=2).to_json()


def test_ols_recovers_coefficients():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(100, 3))
    y = 1.5 + X @ np.array([2.0, -1.0, 0.5])
    m = fit_linear_ols(X, y)
    assert np.allclose(m.coefficients, [2.0, -1.0, 0.5], atol=1e-10)
    assert m.base_prediction == pytest.approx(1.5, abs=1e-10)


def test_ols_rank_deficient_falls_back_to_ridge():
    rng = np.random.default_rng(6)
    x = rng.normal(size=50)
    X = np.column_stack([x, x])
    m = fit_linear_ols(X, 3 * x)
    assert m.meta["rank_deficient"]
    assert np.allclose(m.predict(X), 3 * x, atol=1e-6)


@pytest.mark.parametrize("kind", ["rf", "gbt", "ols", "single_tree"])
def test_json_round_trip(kind, tmp_path):
    X, y = fixture(8)
    params = {"rf": ForestParams(n_trees=3), "gbt": GbtParams(n_rounds=3)}.get(kind)
    m = fit_model(kind, X, y, params, feature_names=[f"f{i}" for i in range(4)])
    m.save(tmp_path / "m.json")
    back = EnsembleModel.load(tmp_path / "m.json")
    assert np.array_equal(back.predict(X), m.predict(X))
    assert back.to_json() == m.to_json()


def test_params_from_dict():
    assert params_from_dict("rf", {"n_trees": 10, "max_depth": None}).n_trees == 10
    assert params_from_dict("gbt", {"eta": 0.3}).eta == 0.3
    assert params_from_dict("ols", {}) is None


def test_bad_params():
    with pytest.raises(ValueError):
        GbtParams(eta=0)
    with pytest.raises(ValueError):
        ForestParams(n_trees=0)
    with pytest.raises(ValueError):
        fit_model("svm", np.zeros((3, 1)), np.zeros(3))
