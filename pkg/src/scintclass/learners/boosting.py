from __future__ import annotations

import math

import numpy as np

from .base import N_CLASSES, Classifier, labels_to_index
from .tree import DecisionTree


class AdaBoostSAMME(Classifier):
    """Multiclass AdaBoost (SAMME) over small Gini trees.

    Round t fits a tree to the current sample weights, measures its weighted
    error ``err``, and gets vote weight
    ``learning_rate * (log((1 - err) / err) + log(K - 1))``. Misclassified
    rows are multiplied by ``exp(weight)`` and the weights renormalised.

    Boosting stops early when a round's error is zero (that tree alone then
    forms the ensemble if it is the first) or at least ``1 - 1/K`` (the tree
    is discarded). When every vote weight is zero the model falls back to
    the training class priors.
    """

    kind = "boosted"

    def __init__(self, n_learners: int = 30, max_splits: int = 20, learning_rate: float = 0.1):
        if n_learners < 1:
            raise ValueError("n_learners must be at least 1")
        if learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        self.n_learners = n_learners
        self.max_splits = max_splits
        self.learning_rate = learning_rate
        self.learners = None

    def fit(self, X, y) -> "AdaBoostSAMME":
        X = np.asarray(X, dtype=float)
        yi = labels_to_index(y)
        n = len(yi)
        self.prior = np.bincount(yi, minlength=N_CLASSES) / n
        w = np.full(n, 1.0 / n)
        self.learners, self.alphas = [], []
        self.errors = []
        self.weight_history = [w.copy()]
        for _ in range(self.n_learners):
            tree = DecisionTree(self.max_splits).fit(X, yi + 1, sample_weight=w)
            miss = tree.predict(X) != yi + 1
            err = float(w[miss].sum() / w.sum())
            self.errors.append(err)
            if err <= 0.0:
                if not self.learners:
                    self.learners, self.alphas = [tree], [1.0]
                break
            if err >= 1.0 - 1.0 / N_CLASSES:
                break
            alpha = self.learning_rate * (math.log((1.0 - err) / err) + math.log(N_CLASSES - 1))
            self.learners.append(tree)
            self.alphas.append(alpha)
            w = w * np.exp(alpha * miss)
            w = w / w.sum()
            self.weight_history.append(w.copy())
        return self

    def _fitted(self) -> bool:
        return self.learners is not None

    def predict_scores(self, X) -> np.ndarray:
        self._check_fitted()
        X = np.atleast_2d(np.asarray(X, dtype=float))
        total = float(sum(self.alphas))
        if total <= 0.0:
            return np.tile(self.prior, (len(X), 1))
        scores = np.zeros((len(X), N_CLASSES))
        rows = np.arange(len(X))
        for tree, alpha in zip(self.learners, self.alphas):
            scores[rows, tree.predict(X) - 1] += alpha
        return scores / total

    def get_params(self) -> dict:
        return {"n_learners": self.n_learners, "max_splits": self.max_splits,
                "learning_rate": self.learning_rate}

    def get_state(self) -> dict:
        self._check_fitted()
        return {
            "prior": self.prior.tolist(),
            "alphas": list(self.alphas),
            "trees": [t.get_state() for t in self.learners],
        }

    def set_state(self, state: dict) -> "AdaBoostSAMME":
        self.prior = np.array(state["prior"], dtype=float)
        self.alphas = [float(a) for a in state["alphas"]]
        self.learners = [DecisionTree(self.max_splits).set_state(s) for s in state["trees"]]
        return self
