from __future__ import annotations

import numpy as np

CLASS_LABELS = np.array([1, 2, 3], dtype=np.int64)
N_CLASSES = len(CLASS_LABELS)


class NotFittedError(RuntimeError):
    pass


def labels_to_index(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if y.size and not np.isin(y, CLASS_LABELS).all():
        raise ValueError("class labels must be 1, 2 or 3")
    return y - 1


def scores_to_labels(scores: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, so ties go to the lowest class
    return CLASS_LABELS[np.argmax(scores, axis=1)]


class Classifier:
    """Common surface: ``fit``, ``predict_scores`` (n, 3), ``predict`` (labels)."""

    kind = "base"

    def _fitted(self) -> bool:
        raise NotImplementedError

    def _check_fitted(self) -> None:
        if not self._fitted():
            raise NotFittedError(f"{type(self).__name__} has not been fitted")

    def predict_scores(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        return scores_to_labels(self.predict_scores(X))

    def get_params(self) -> dict:
        raise NotImplementedError

    def get_state(self) -> dict:
        raise NotImplementedError

    def set_state(self, state: dict) -> "Classifier":
        raise NotImplementedError


class Standardizer:
    """Per-feature z-scores using training statistics only."""

    def __init__(self, mean=None, scale=None):
        self.mean = None if mean is None else np.asarray(mean, dtype=float)
        self.scale = None if scale is None else np.asarray(scale, dtype=float)

    def fit(self, X) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        self.mean = X.mean(axis=0)
        std = X.std(axis=0)
        self.scale = np.where(std > 0, std, 1.0)
        return self

    def transform(self, X) -> np.ndarray:
        return (np.atleast_2d(np.asarray(X, dtype=float)) - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(d["mean"], d["scale"])
