import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scintclass.learners.boosting import AdaBoostSAMME

X6 = np.arange(6, dtype=float)[:, None]
Y6 = np.array([1, 1, 1, 2, 2, 1])


def test_first_round_weight_update_by_hand():
    # the best stump splits at 2.5; its right leaf {2, 2, 1} votes 2 and misses x = 5.
    # err = 1/6, alpha = 0.1 * (ln 5 + ln 2); the missed row is scaled by e^alpha
    model = AdaBoostSAMME(n_learners=2, max_splits=1, learning_rate=0.1).fit(X6, Y6)
    alpha = 0.1 * (math.log(5.0) + math.log(2.0))
    assert model.errors[0] == pytest.approx(1 / 6, abs=1e-15)
    assert model.alphas[0] == pytest.approx(alpha, abs=1e-15)
    z = 5.0 + math.exp(alpha)
    expected = [1 / z] * 5 + [math.exp(alpha) / z]
    assert np.allclose(model.weight_history[1], expected, rtol=0, atol=1e-12)


def test_second_round_error_uses_updated_weights():
    model = AdaBoostSAMME(n_learners=2, max_splits=1, learning_rate=0.1).fit(X6, Y6)
    w = model.weight_history[1]
    miss = model.learners[1].predict(X6) != Y6
    assert model.errors[1] == pytest.approx(w[miss].sum(), abs=1e-12)


def test_zero_error_first_round_stops():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = [1, 1, 3, 3]
    model = AdaBoostSAMME(n_learners=30, max_splits=5).fit(X, y)
    assert len(model.learners) == 1 and model.alphas == [1.0]
    assert model.predict(X).tolist() == y


def test_zero_learning_rate_falls_back_to_prior():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 3))
    y = np.array([1] * 10 + [2] * 35 + [3] * 15)
    model = AdaBoostSAMME(n_learners=5, learning_rate=0.0).fit(X, y)
    assert all(a == 0.0 for a in model.alphas)
    assert set(model.predict(rng.normal(size=(20, 3))).tolist()) == {2}


def test_weak_learner_at_chance_is_discarded():
    # identical inputs: no split is possible, the single leaf errs on 2/3 of the mass
    X = np.zeros((9, 2))
    y = np.repeat([1, 2, 3], 3)
    model = AdaBoostSAMME().fit(X, y)
    assert model.learners == [] and model.errors == [pytest.approx(2 / 3)]
    assert model.predict([[0.0, 0.0]]).tolist() == [1]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(6, 80), lr=st.sampled_from([0.1, 0.5, 1.0]))
def test_weights_stay_a_distribution(seed, n, lr):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 4, size=(n, 2)).astype(float)
    y = rng.integers(1, 4, n)
    model = AdaBoostSAMME(n_learners=10, max_splits=3, learning_rate=lr).fit(X, y)
    for w in model.weight_history:
        assert np.all(w >= 0)
        assert abs(w.sum() - 1.0) <= 1e-12


def test_separable_clusters():
    rng = np.random.default_rng(3)
    X = np.vstack([rng.normal(m, 0.5, (30, 2)) for m in (-4, 0, 4)])
    y = np.repeat([1, 2, 3], 30)
    model = AdaBoostSAMME().fit(X, y)
    assert (model.predict(X) == y).mean() > 0.95


def test_state_round_trip():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(80, 3))
    y = rng.integers(1, 4, 80)
    model = AdaBoostSAMME(n_learners=8).fit(X, y)
    back = AdaBoostSAMME(n_learners=8).set_state(model.get_state())
    assert np.array_equal(model.predict_scores(X), back.predict_scores(X))
