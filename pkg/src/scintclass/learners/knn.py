from __future__ import annotations

import numpy as np

from .base import N_CLASSES, Classifier, Standardizer, labels_to_index

WEIGHTINGS = ("squared_inverse", "inverse", "equal")


class WeightedKNN(Classifier):
    """k nearest neighbours on z-scored features, Euclidean distance.

    Distances scale the raw coordinate differences, ``(q - x) / std``, so
    neighbours that tie in the original units still tie exactly.

    Each of the k neighbours votes for its class with weight ``1/d^2``
    (``squared_inverse``). If any of them sits at distance zero, only the
    zero-distance neighbours vote. Distance ties at the k-th place go to the
    lower exemplar index.
    """

    kind = "knn"

    def __init__(self, k: int = 10, weighting: str = "squared_inverse", chunk_elems: int = 4_000_000):
        if k < 1:
            raise ValueError("k must be at least 1")
        if weighting not in WEIGHTINGS:
            raise ValueError(f"unknown distance weighting {weighting!r}")
        self.k = k
        self.weighting = weighting
        self.chunk_elems = chunk_elems
        self.exemplars = None

    def fit(self, X, y) -> "WeightedKNN":
        X = np.asarray(X, dtype=float)
        if self.k > len(X):
            raise ValueError(f"k={self.k} exceeds the {len(X)} training rows")
        self.scaler = Standardizer().fit(X)
        self.exemplars = X.copy()
        self.labels = labels_to_index(y)
        return self

    def _fitted(self) -> bool:
        return self.exemplars is not None

    def kneighbors(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Squared distances and exemplar indices of the k nearest, nearest first."""
        self._check_fitted()
        Q = np.atleast_2d(np.asarray(X, dtype=float))
        E = self.exemplars
        scale = self.scaler.scale
        n, k = len(Q), self.k
        dist = np.empty((n, k))
        idx = np.empty((n, k), dtype=np.int64)
        step = max(1, self.chunk_elems // (len(E) * E.shape[1]))
        for s in range(0, n, step):
            diff = (Q[s:s + step, None, :] - E[None, :, :]) / scale
            d2 = np.einsum("qnf,qnf->qn", diff, diff)
            order = np.argsort(d2, axis=1, kind="stable")[:, :k]
            idx[s:s + step] = order
            dist[s:s + step] = np.take_along_axis(d2, order, axis=1)
        return dist, idx

    def class_votes(self, X) -> np.ndarray:
        """Unnormalised per-class vote totals, shape (n, 3)."""
        d2, idx = self.kneighbors(X)
        cls = self.labels[idx]
        zero = d2 == 0
        if self.weighting == "squared_inverse":
            with np.errstate(divide="ignore"):
                w = 1.0 / d2
        elif self.weighting == "inverse":
            with np.errstate(divide="ignore"):
                w = 1.0 / np.sqrt(d2)
        else:
            w = np.ones_like(d2)
        has_zero = zero.any(axis=1)
        w = np.where(has_zero[:, None], zero.astype(float), w)
        scores = np.zeros((len(d2), N_CLASSES))
        for c in range(N_CLASSES):
            scores[:, c] = np.where(cls == c, w, 0.0).sum(axis=1)
        return scores

    def predict_scores(self, X) -> np.ndarray:
        votes = self.class_votes(X)
        return votes / votes.sum(axis=1, keepdims=True)

    def get_params(self) -> dict:
        return {"k_neighbors": self.k, "distance_weighting": self.weighting}

    def get_state(self) -> dict:
        self._check_fitted()
        return {
            "standardizer": self.scaler.to_dict(),
            "exemplars": self.exemplars.tolist(),
            "labels": (self.labels + 1).tolist(),
        }

    def set_state(self, state: dict) -> "WeightedKNN":
        self.scaler = Standardizer.from_dict(state["standardizer"])
        self.exemplars = np.array(state["exemplars"], dtype=float)
        self.labels = labels_to_index(state["labels"])
        return self
