from __future__ import annotations

import numpy as np

from .base import N_CLASSES, Classifier, labels_to_index
from .tree import DecisionTree


def member_seeds(seed: int, n_learners: int) -> list[np.random.SeedSequence]:
    """Independent child seeds for each ensemble member, derived from one seed."""
    return np.random.SeedSequence(seed).spawn(n_learners)


def bootstrap_indices(n_rows: int, n_learners: int, seed: int) -> list[np.ndarray]:
    """``n_rows`` draws with replacement for each member."""
    return [
        np.random.default_rng(s).integers(0, n_rows, size=n_rows)
        for s in member_seeds(seed, n_learners)
    ]


class BaggedTrees(Classifier):
    """Bootstrap-aggregated Gini trees.

    The ensemble score is the mean of the members' leaf class distributions;
    the predicted class is its argmax with ties going to the lowest class.
    ``max_splits=None`` lets every tree grow until its leaves are pure.
    A bootstrap draw is equivalent to fitting on row multiplicities, which is
    how members are trained.
    """

    kind = "bagged"

    def __init__(self, n_learners: int = 30, max_splits: int | None = None,
                 seed: int = 0, bootstrap: bool = True):
        if n_learners < 1:
            raise ValueError("n_learners must be at least 1")
        self.n_learners = n_learners
        self.max_splits = max_splits
        self.seed = seed
        self.bootstrap = bootstrap
        self.trees = None

    def fit(self, X, y) -> "BaggedTrees":
        X = np.asarray(X, dtype=float)
        labels = labels_to_index(y) + 1
        n = len(labels)
        self.trees = []
        draws = bootstrap_indices(n, self.n_learners, self.seed) if self.bootstrap else None
        for m in range(self.n_learners):
            weight = np.bincount(draws[m], minlength=n).astype(float) if self.bootstrap else None
            self.trees.append(DecisionTree(self.max_splits).fit(X, labels, sample_weight=weight))
        return self

    def _fitted(self) -> bool:
        return self.trees is not None

    def predict_scores(self, X) -> np.ndarray:
        self._check_fitted()
        X = np.atleast_2d(np.asarray(X, dtype=float))
        total = np.zeros((len(X), N_CLASSES))
        for tree in self.trees:
            total += tree.predict_scores(X)
        return total / len(self.trees)

    def get_params(self) -> dict:
        return {"n_learners": self.n_learners, "max_splits": self.max_splits,
                "bootstrap": self.bootstrap}

    def get_state(self) -> dict:
        self._check_fitted()
        return {"trees": [t.get_state() for t in self.trees]}

    def set_state(self, state: dict) -> "BaggedTrees":
        self.trees = [DecisionTree(self.max_splits).set_state(s) for s in state["trees"]]
        return self
