from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from synthmetric import cart
from synthmetric.cart import TreeConfig

from oracles import best_numeric_split


def _gini_n(y):
    _, c = np.unique(y, return_counts=True)
    return y.size - (c ** 2).sum() / y.size


def test_constant_response_gives_root_only():
    X = np.random.default_rng(0).normal(size=(50, 2))
    t = cart.fit_classification_tree(X, np.ones(50, dtype=int), TreeConfig(min_leaf=1))
    assert t.n_splits == 0
    np.testing.assert_array_equal(cart.predict_scores(t, X), 1.0)
    r = cart.fit_regression_tree(X, np.full(50, 3.0), TreeConfig(min_leaf=1))
    assert r.n_splits == 0


def test_no_admissible_split_scores_equal_share():
    X = np.random.default_rng(1).normal(size=(100, 3))
    y = np.r_[np.zeros(50), np.ones(50)].astype(int)
    t = cart.fit_classification_tree(X, y, TreeConfig(min_leaf=60))
    assert t.n_splits == 0
    np.testing.assert_array_equal(cart.training_scores(t), 0.5)


def test_perfect_binary_predictor_single_split():
    x = np.r_[np.zeros(30), np.ones(30)]
    X = np.column_stack([np.random.default_rng(2).normal(size=60), x])
    t = cart.fit_classification_tree(X, x.astype(int), TreeConfig(min_leaf=5))
    assert t.n_splits == 1 and t.root.feature == 1
    assert sorted(nd.value[1] for nd in t.leaves) == [0.0, 1.0]


def test_step_function_regression_splits_at_step():
    x = np.arange(40.0)
    y = np.where(x < 17, 1.0, 5.0)
    t = cart.fit_regression_tree(x[:, None], y, TreeConfig(min_leaf=2))
    assert t.root.threshold == pytest.approx(16.5)
    assert t.n_splits == 1


@pytest.mark.parametrize("seed", range(8))
def test_regression_root_split_matches_exhaustive_scan(seed):
    r = np.random.default_rng(seed)
    X = np.round(r.normal(size=(80, 3)), 1)
    y = X[:, seed % 3] ** 2 + r.normal(size=80)
    t = cart.fit_regression_tree(X, y, TreeConfig(min_leaf=5, max_depth=1, complexity=0))
    gains = [best_numeric_split(X[:, j], y, 5)[0] for j in range(3)]
    j = int(np.argmax(gains))
    assert t.root.feature == j
    assert t.root.threshold == pytest.approx(best_numeric_split(X[:, j], y, 5)[1])
    left, right = t.nodes[t.root.left], t.nodes[t.root.right]
    gain = t.root.impurity - left.impurity - right.impurity
    assert gain == pytest.approx(gains[j], rel=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_classification_root_split_matches_exhaustive_scan(seed):
    r = np.random.default_rng(50 + seed)
    X = np.round(r.normal(size=(90, 2)), 1)
    y = (X[:, 0] + 0.5 * r.normal(size=90) > 0).astype(int)
    t = cart.fit_classification_tree(X, y, TreeConfig(min_leaf=4, max_depth=1, complexity=0))
    gains = [best_numeric_split(X[:, j], y, 4, "classification")[0] for j in range(2)]
    assert t.root.feature == int(np.argmax(gains))
    left, right = t.nodes[t.root.left], t.nodes[t.root.right]
    assert t.root.impurity - left.impurity - right.impurity == pytest.approx(max(gains), rel=1e-9)


def test_tie_broken_by_lowest_feature_index():
    x = np.r_[np.zeros(10), np.ones(10)]
    X = np.column_stack([x, x, x])
    t = cart.fit_classification_tree(X, x.astype(int), TreeConfig(min_leaf=1))
    assert t.root.feature == 0


def test_categorical_subset_split():
    r = np.random.default_rng(3)
    g = r.integers(0, 4, 200)
    y = np.isin(g, [1, 3]).astype(int)
    t = cart.fit_classification_tree(g[:, None].astype(float), y, TreeConfig(min_leaf=5),
                                     categorical=[True])
    assert t.n_splits == 1
    assert {t.root.left_levels, t.root.right_levels} == {frozenset({0, 2}), frozenset({1, 3})}


def test_many_level_categorical_uses_one_vs_rest():
    r = np.random.default_rng(4)
    g = r.integers(0, 12, 600)
    y = (g == 7).astype(int)
    t = cart.fit_classification_tree(g[:, None].astype(float), y, TreeConfig(min_leaf=5),
                                     categorical=[True])
    assert frozenset({7}) in (t.root.left_levels, t.root.right_levels)


def test_unseen_category_goes_to_larger_child():
    g = np.r_[np.zeros(30), np.ones(10)]
    y = g.astype(int)
    t = cart.fit_classification_tree(g[:, None], y, TreeConfig(min_leaf=2), categorical=[True])
    big = t.root.left if t.nodes[t.root.left].n > t.nodes[t.root.right].n else t.root.right
    assert cart.apply(t, np.array([[5.0]]))[0] == big


def test_hand_built_two_leaf_tree():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0, 0, 1, 0])
    t = cart.fit_classification_tree(X, y, TreeConfig(min_leaf=1, max_depth=1, complexity=0))
    # best split isolates {0,1} from {2,3}: children Gini*n = 0 and 1
    assert t.root.threshold == pytest.approx(1.5)
    np.testing.assert_allclose(cart.predict_scores(t, X), [0, 0, 0.5, 0.5])
    np.testing.assert_allclose(cart.predict_proba(t, X)[:, 0], [1, 1, 0.5, 0.5])


def test_complexity_blocks_weak_splits():
    r = np.random.default_rng(5)
    X = r.normal(size=(200, 2))
    y = r.integers(0, 2, 200)
    weak = cart.fit_classification_tree(X, y, TreeConfig(min_leaf=5, complexity=0.5))
    assert weak.n_splits == 0
    strong = cart.fit_classification_tree(X, y, TreeConfig(min_leaf=5, complexity=0.0))
    assert strong.n_splits > 0


def test_sample_from_leaf_single_donor_and_root():
    X = np.arange(6.0)[:, None]
    y = np.array([10.0, 11, 12, 13, 14, 15])
    t = cart.fit_regression_tree(X, y, TreeConfig(min_leaf=1, complexity=0))
    rng = np.random.default_rng(0)
    for i in range(6):
        assert cart.sample_from_leaf(t, X[i], rng) == y[i]
    root = cart.fit_regression_tree(X, y, TreeConfig(min_leaf=10))
    draws = cart.sample_leaves(root, np.zeros((1000, 1)), rng)
    assert set(np.unique(draws)) == set(y)


def test_two_donor_leaf_is_fair():
    X = np.zeros((2, 1))
    y = np.array([0.0, 1.0])
    t = cart.fit_regression_tree(X, y, TreeConfig(min_leaf=1))
    draws = cart.sample_leaves(t, np.zeros((10_000, 1)), np.random.default_rng(9))
    ones = int(draws.sum())
    assert stats.binomtest(ones, 10_000, 0.5).pvalue > 0.001


def test_extreme_score_fraction():
    assert cart.extreme_score_fraction([0.01, 0.5, 0.99, 0.5]) == 0.5


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 15), st.integers(1, 6))
def test_tree_invariants(seed, min_leaf, max_depth):
    r = np.random.default_rng(seed)
    n = 120
    X = np.column_stack([r.normal(size=n), r.integers(0, 4, n)])
    y = (r.random(n) < 0.3 + 0.4 * (X[:, 1] > 1)).astype(int)
    t = cart.fit_classification_tree(X, y, TreeConfig(min_leaf, max_depth, 0.0), categorical=[False, True])
    leaves = t.leaves
    # leaves partition the rows and respect min_leaf / max_depth
    rows = np.sort(np.concatenate([nd.rows for nd in leaves]))
    np.testing.assert_array_equal(rows, np.arange(n))
    assert all(nd.n >= min_leaf for nd in leaves)
    assert t.depth() <= max_depth
    # impurity never increases from parent to children
    for nd in t.nodes:
        if not nd.is_leaf:
            assert t.nodes[nd.left].impurity + t.nodes[nd.right].impurity <= nd.impurity + 1e-9
            assert nd.impurity == pytest.approx(_gini_n(y[nd.rows]))
    scores = cart.predict_scores(t, X)
    assert np.all((scores >= 0) & (scores <= 1))
    np.testing.assert_allclose(scores, cart.training_scores(t))
