"""CART classification trees grown best-first under a global split budget."""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .base import N_CLASSES, Classifier, labels_to_index

LEAF = -1


def gini_impurity(class_counts) -> float:
    """``1 - sum(p_i^2)`` for a vector of (possibly weighted) class counts."""
    counts = np.asarray(class_counts, dtype=float)
    if np.any(counts < 0):
        raise ValueError("class counts must be non-negative")
    total = counts.sum()
    if total <= 0:
        raise ValueError("gini impurity is undefined for an empty node")
    p = counts / total
    return float(1.0 - np.dot(p, p))


def _weighted_gini(counts: np.ndarray) -> np.ndarray:
    # n * gini(n) over the last axis, i.e. n - sum(c^2)/n
    n = counts.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n > 0, n - (counts**2).sum(axis=-1) / n, 0.0)


@dataclass(frozen=True)
class TreeNode:
    """Read-only view of one node; ``split_feature`` is ``LEAF`` (-1) for leaves."""

    split_feature: int
    split_threshold: float
    left: int
    right: int
    leaf_distribution: tuple[float, float, float]
    weight: float

    @property
    def is_leaf(self) -> bool:
        return self.split_feature == LEAF


@dataclass
class _Split:
    decrease: float
    feature: int
    threshold: float
    left_mask: np.ndarray


def _best_split(X: np.ndarray, W: np.ndarray) -> _Split | None:
    """Best Gini split of one node; ``W`` holds per-row weighted one-hot labels.

    Candidate thresholds are midpoints between consecutive distinct values.
    Ties go to the lowest feature index, then the lowest threshold.
    """
    n = len(X)
    if n < 2:
        return None
    total = W.sum(axis=0)
    parent = float(_weighted_gini(total))
    if parent <= 1e-14 * total.sum():
        return None
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    left = np.cumsum(W[order], axis=0)[:-1]
    right = total - left
    decrease = parent - _weighted_gini(left) - _weighted_gini(right)
    decrease = np.where(xs[1:] > xs[:-1], decrease, -np.inf).T
    pos = int(np.argmax(decrease))
    feature, i = divmod(pos, n - 1)
    best = float(decrease[feature, i])
    if not best > 1e-12 * total.sum():
        return None
    lo, hi = xs[i, feature], xs[i + 1, feature]
    threshold = 0.5 * (lo + hi)
    if threshold <= lo:
        threshold = hi
    return _Split(best, feature, float(threshold), X[:, feature] < threshold)


class DecisionTree(Classifier):
    """Gini tree where ``max_splits`` bounds the number of internal nodes.

    Growth is best-first: among all current leaves the one whose best split
    removes the most weighted impurity is split next, so the tree for a
    smaller budget is always a pruned prefix of the tree for a larger one.
    """

    kind = "tree"

    def __init__(self, max_splits: int = 100, criterion: str = "gini"):
        if max_splits is not None and max_splits < 0:
            raise ValueError("max_splits must be non-negative")
        if criterion != "gini":
            raise ValueError(f"unsupported split criterion {criterion!r}")
        self.max_splits = max_splits
        self.criterion = criterion
        self.feature = None

    def fit(self, X, y, sample_weight=None) -> "DecisionTree":
        X = np.asarray(X, dtype=float)
        yi = labels_to_index(y)
        w = np.ones(len(yi)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        keep = w > 0
        X, yi, w = X[keep], yi[keep], w[keep]
        if len(yi) == 0:
            raise ValueError("cannot fit a tree to an empty training set")
        W = np.zeros((len(yi), N_CLASSES))
        W[np.arange(len(yi)), yi] = w
        budget = len(yi) - 1 if self.max_splits is None else self.max_splits

        feature, threshold, left, right, value, weight = [], [], [], [], [], []

        def new_node(rows: np.ndarray) -> int:
            counts = W[rows].sum(axis=0)
            feature.append(LEAF)
            threshold.append(0.0)
            left.append(LEAF)
            right.append(LEAF)
            value.append(counts / counts.sum())
            weight.append(float(counts.sum()))
            return len(feature) - 1

        # entries are (-decrease, node id, ...); ids are unique, so ties
        # never fall through to comparing arrays
        heap: list = []

        def consider(node: int, rows: np.ndarray) -> None:
            if budget == 0:
                return
            split = _best_split(X[rows], W[rows])
            if split is not None:
                heapq.heappush(heap, (-split.decrease, node, rows, split))

        root_rows = np.arange(len(yi))
        consider(new_node(root_rows), root_rows)
        n_splits = 0
        while heap and n_splits < budget:
            _, node, rows, split = heapq.heappop(heap)
            rows_l, rows_r = rows[split.left_mask], rows[~split.left_mask]
            feature[node] = split.feature
            threshold[node] = split.threshold
            left[node] = new_node(rows_l)
            right[node] = new_node(rows_r)
            n_splits += 1
            if n_splits < budget:
                consider(left[node], rows_l)
                consider(right[node], rows_r)

        self.feature = np.array(feature, dtype=np.int64)
        self.threshold = np.array(threshold, dtype=float)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.value = np.array(value, dtype=float).reshape(-1, N_CLASSES)
        self.weight = np.array(weight, dtype=float)
        return self

    @property
    def n_splits(self) -> int:
        self._check_fitted()
        return int(np.sum(self.feature != LEAF))

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row."""
        self._check_fitted()
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(len(X), dtype=np.int64)
        active = np.arange(len(X))
        while active.size:
            f = self.feature[node[active]]
            internal = f != LEAF
            active = active[internal]
            if not active.size:
                break
            f = f[internal]
            cur = node[active]
            go_left = X[active, f] < self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
        return node

    def predict_scores(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def training_impurity(self) -> float:
        """Weighted mean Gini impurity of the leaves."""
        self._check_fitted()
        leaves = self.feature == LEAF
        counts = self.value[leaves] * self.weight[leaves, None]
        return float(_weighted_gini(counts).sum() / self.weight[0])

    def nodes(self) -> list[TreeNode]:
        self._check_fitted()
        return [
            TreeNode(
                int(self.feature[i]),
                float(self.threshold[i]),
                int(self.left[i]),
                int(self.right[i]),
                tuple(float(v) for v in self.value[i]),
                float(self.weight[i]),
            )
            for i in range(len(self.feature))
        ]

    def _fitted(self) -> bool:
        return self.feature is not None

    def get_params(self) -> dict:
        return {"max_splits": self.max_splits, "criterion": self.criterion}

    def get_state(self) -> dict:
        self._check_fitted()
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "weight": self.weight.tolist(),
        }

    def set_state(self, state: dict) -> "DecisionTree":
        self.feature = np.array(state["feature"], dtype=np.int64)
        self.threshold = np.array(state["threshold"], dtype=float)
        self.left = np.array(state["left"], dtype=np.int64)
        self.right = np.array(state["right"], dtype=np.int64)
        self.value = np.array(state["value"], dtype=float).reshape(-1, N_CLASSES)
        self.weight = np.array(state["weight"], dtype=float)
        return self
