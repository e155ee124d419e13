import numpy as np
import pytest

from scintclass.learners.bagging import BaggedTrees, bootstrap_indices
from scintclass.learners.tree import DecisionTree


def leaf_state(dist):
    return {"feature": [-1], "threshold": [0.0], "left": [-1], "right": [-1], "value": [list(dist)], "weight": [1.0]}


def test_average_of_leaf_distributions():
    model = BaggedTrees(n_learners=3).set_state(
        {"trees": [leaf_state((0.6, 0.3, 0.1)), leaf_state((0.2, 0.5, 0.3)), leaf_state((0.1, 0.4, 0.5))]}
    )
    assert model.predict_scores([[0.0]])[0] == pytest.approx([0.3, 0.4, 0.3], abs=1e-15)
    assert model.predict([[0.0]]).tolist() == [2]


def test_degenerate_ensemble_equals_single_tree():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(1000, 7))
    y = rng.integers(1, 4, 1000)
    bag = BaggedTrees(n_learners=1, bootstrap=False, max_splits=50).fit(X, y)
    tree = DecisionTree(max_splits=50).fit(X, y)
    Q = np.vstack([X, rng.normal(size=(500, 7))])
    assert np.array_equal(bag.predict(Q), tree.predict(Q))


def test_bootstrap_indices_are_deterministic():
    a = bootstrap_indices(100, 5, seed=42)
    b = bootstrap_indices(100, 5, seed=42)
    c = bootstrap_indices(100, 5, seed=43)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not all(np.array_equal(x, y) for x, y in zip(a, c))
    assert all(len(x) == 100 and x.min() >= 0 and x.max() < 100 for x in a)


def test_members_match_trees_fit_on_resamples():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(120, 3))
    y = rng.integers(1, 4, 120)
    bag = BaggedTrees(n_learners=4, max_splits=15, seed=9).fit(X, y)
    Q = rng.normal(size=(300, 3))
    for idx, member in zip(bootstrap_indices(120, 4, 9), bag.trees):
        direct = DecisionTree(max_splits=15).fit(X[idx], y[idx])
        assert np.array_equal(member.predict_scores(Q), direct.predict_scores(Q))


def test_same_seed_same_model():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(200, 4))
    y = rng.integers(1, 4, 200)
    a = BaggedTrees(n_learners=5, seed=3).fit(X, y).get_state()
    b = BaggedTrees(n_learners=5, seed=3).fit(X, y).get_state()
    assert a == b


def test_scores_are_distributions():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(150, 2))
    y = rng.integers(1, 4, 150)
    s = BaggedTrees(n_learners=7).fit(X, y).predict_scores(rng.normal(size=(100, 2)))
    assert np.all(s >= 0) and np.allclose(s.sum(axis=1), 1.0, atol=1e-12)
