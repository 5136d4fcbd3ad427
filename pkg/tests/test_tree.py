from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from honeycast.models import Tree, TreeParams, best_split, fit_regression_tree, predict_tree
from honeycast.models.tree import cost_complexity_prune
from oracles import brute_tree, candidate_splits, sse


def random_instance(rng, integer_y=None):
    n = int(rng.integers(2, 31))
    p = int(rng.integers(1, 4))
    if rng.random() < 0.5:
        X = rng.integers(0, 5, size=(n, p)).astype(float)
    else:
        X = rng.normal(size=(n, p))
    integer_y = rng.random() < 0.5 if integer_y is None else integer_y
    y = rng.integers(-3, 4, size=n).astype(float) if integer_y else rng.normal(size=n) * 5
    return X, y, integer_y


def assert_matches_oracle(tree: Tree, X, y, max_depth, min_leaf=1, min_split=2,
                          exact_ties=False, node=0, depth=0):
    ref = brute_tree(X, y, max_depth, min_leaf, min_split, depth)
    tol = 1e-10 * max(1.0, ref["sse"])
    assert abs(tree.sse[node] - ref["sse"]) <= tol
    assert abs(tree.value[node] - ref["value"]) <= 1e-10 * max(1.0, abs(ref["value"]))
    assert tree.n_samples[node] == ref["n"]
    if ref["split"] is None:
        assert tree.feature[node] == -1
        return
    f, s = int(tree.feature[node]), float(tree.threshold[node])
    assert f >= 0, "oracle splits but the tree stops"
    ties = {(a, b) for a, b, _ in ref["ties"]}
    assert (f, s) in ties
    if exact_ties:
        assert (f, s) == ref["split"], "tie rule: lowest feature, then smallest threshold"
    left = X[:, f] <= s
    l, r = int(tree.left[node]), int(tree.right[node])
    assert abs(tree.sse[l] + tree.sse[r] - ref["best_child_sse"]) <= tol
    assert_matches_oracle(tree, X[left], y[left], max_depth, min_leaf, min_split, exact_ties, l,
                          depth + 1)
    assert_matches_oracle(tree, X[~left], y[~left], max_depth, min_leaf, min_split, exact_ties, r,
                          depth + 1)


def test_oracle_agreement_many_instances():
    rng = np.random.default_rng(123)
    for _ in range(300):
        X, y, integer_y = random_instance(rng)
        depth = int(rng.integers(0, 3))
        leaf = int(rng.integers(1, 4))
        tree = fit_regression_tree(X, y, TreeParams(max_depth=depth, min_samples_leaf=leaf))
        assert_matches_oracle(tree, X, y, depth, leaf, exact_ties=integer_y)


@given(st.integers(0, 2**32 - 1))
def test_oracle_agreement_property(seed):
    rng = np.random.default_rng(seed)
    X, y, integer_y = random_instance(rng)
    tree = fit_regression_tree(X, y, TreeParams(max_depth=2))
    assert_matches_oracle(tree, X, y, 2, exact_ties=integer_y)


def test_constant_target_is_single_leaf():
    X = np.arange(10.0)[:, None]
    tree = fit_regression_tree(X, np.full(10, 3.0))
    assert tree.n_nodes == 1 and tree.value[0] == 3.0


def test_identical_features_no_split():
    tree = fit_regression_tree(np.ones((8, 2)), np.arange(8.0))
    assert tree.n_nodes == 1


def test_tie_goes_to_lowest_feature():
    X = np.array([[0, 0], [0, 0], [1, 1], [1, 1]], dtype=float)
    y = np.array([0, 0, 1, 1], dtype=float)
    s = best_split(X, y)
    assert s.feature == 0 and s.threshold == 0.5


def test_best_split_matches_exhaustive():
    rng = np.random.default_rng(0)
    for _ in range(50):
        X = rng.normal(size=(20, 3))
        y = rng.normal(size=20)
        s = best_split(X, y)
        best = min(candidate_splits(X, y), key=lambda c: c[2])
        assert (s.feature, s.threshold) == best[:2]
        assert s.sse_left + s.sse_right == pytest.approx(best[2], rel=1e-12)


def test_min_samples_leaf_excludes_small_children():
    X = np.arange(10.0)[:, None]
    y = np.r_[np.zeros(9), 100.0]
    tree = fit_regression_tree(X, y, TreeParams(max_depth=1, min_samples_leaf=3))
    left = tree.n_samples[tree.left[0]]
    right = tree.n_samples[tree.right[0]]
    assert min(left, right) >= 3


def test_sample_weights_act_like_repeats():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(15, 2))
    y = rng.normal(size=15)
    w = rng.integers(0, 3, size=15)
    w[0] = 1
    rep = np.repeat(np.arange(15), w)
    a = fit_regression_tree(X, y, TreeParams(max_depth=3), sample_weight=w.astype(float))
    b = fit_regression_tree(X[rep], y[rep], TreeParams(max_depth=3))
    assert np.array_equal(a.feature, b.feature)
    assert np.allclose(a.threshold, b.threshold) and np.allclose(a.value, b.value)


def test_predict_routes_left_on_equality():
    X = np.array([[0.0], [1.0]])
    tree = fit_regression_tree(X, np.array([0.0, 1.0]))
    assert predict_tree(tree, np.array([tree.threshold[0]])) == 0.0
    with pytest.raises(ValueError):
        predict_tree(tree, np.array([np.nan]))


def test_predictions_are_leaf_means():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(40, 3))
    y = rng.normal(size=40)
    tree = fit_regression_tree(X, y, TreeParams(max_depth=3))
    leaves = tree.apply(X)
    for leaf in np.unique(leaves):
        assert tree.value[leaf] == pytest.approx(y[leaves == leaf].mean(), abs=1e-12)


def test_json_round_trip_exact():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(50, 3))
    tree = fit_regression_tree(X, rng.normal(size=50), TreeParams(max_depth=4))
    back = Tree.from_dict(json.loads(json.dumps(tree.to_dict())))
    assert back.equals(tree)
    assert np.array_equal(back.predict(X), tree.predict(X))


def test_pruning_monotone_in_alpha():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(200, 3))
    y = np.sin(X[:, 0]) + 0.3 * rng.normal(size=200)
    full = fit_regression_tree(X, y)
    leaves = [cost_complexity_prune(full, a).n_leaves for a in (0.0, 1e-4, 1e-3, 1e-2, 1.0)]
    assert leaves == sorted(leaves, reverse=True)
    assert leaves[-1] == 1


def test_pruned_tree_error_no_less_than_full():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(100, 2))
    y = X[:, 0] + rng.normal(size=100)
    full = fit_regression_tree(X, y)
    pruned = fit_regression_tree(X, y, TreeParams(ccp_alpha=1e-2))
    e = lambda t: sse(y - t.predict(X)) + len(y) * np.mean(y - t.predict(X)) ** 2
    assert e(pruned) >= e(full) - 1e-9


def test_invalid_params():
    with pytest.raises(ValueError):
        TreeParams(min_samples_leaf=0)
    with pytest.raises(ValueError):
        TreeParams(ccp_alpha=-1)
    with pytest.raises(ValueError):
        fit_regression_tree(np.zeros((0, 2)), np.zeros(0))
