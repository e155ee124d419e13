"""The six classifiers behind one train/predict surface."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from typing import IO

import numpy as np

from .bagging import BaggedTrees, bootstrap_indices
from .base import CLASS_LABELS, Classifier, NotFittedError, Standardizer
from .bayes import GaussianNaiveBayes
from .boosting import AdaBoostSAMME
from .knn import WeightedKNN
from .svm import SVM, BinarySVM, SVMConvergenceError, gaussian_kernel
from .tree import DecisionTree, TreeNode, gini_impurity

MODEL_KINDS = ("tree", "naive_bayes", "svm", "knn", "boosted", "bagged")
FORMAT_VERSION = 1

__all__ = [
    "AdaBoostSAMME", "BaggedTrees", "BinarySVM", "Classifier", "DecisionTree",
    "GaussianNaiveBayes", "MODEL_KINDS", "ModelParams", "NotFittedError", "SVM",
    "SVMConvergenceError", "Standardizer", "TrainedModel", "TreeNode", "WeightedKNN",
    "bootstrap_indices", "gaussian_kernel", "gini_impurity", "load_model", "predict",
    "save_model", "train",
]


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    """Hyperparameters for any of the six model kinds.

    Fields a kind does not use are ignored by it. ``defaults(kind)`` gives the
    baseline settings (tree: 100 splits; boosted: 30 learners, 20 splits,
    rate 0.1; bagged: 30 learners, unlimited splits; KNN: 10 neighbours,
    squared-inverse weights; SVM: kernel scale 0.66, box 1).
    """

    kind: str
    max_splits: int | None = 100
    split_criterion: str = "gini"
    n_learners: int = 30
    learning_rate: float = 0.1
    k_neighbors: int = 10
    distance_weighting: str = "squared_inverse"
    kernel_scale: float = 0.66
    box_constraint: float = 1.0
    svm_tol: float = 1e-3
    svm_max_iter: int | None = None
    nb_likelihood: str = "gaussian"
    bootstrap: bool = True

    def __post_init__(self):
        problems = self.validate()
        if problems:
            raise ModelError("; ".join(problems))

    def validate(self) -> list[str]:
        out = []
        if self.kind not in MODEL_KINDS:
            out.append(f"kind: must be one of {', '.join(MODEL_KINDS)}, got {self.kind!r}")
        if self.max_splits is not None and self.max_splits < 0:
            out.append("max_splits: must be >= 0")
        if self.n_learners < 1:
            out.append("n_learners: must be >= 1")
        if not 0 <= self.learning_rate <= 1:
            out.append("learning_rate: must lie in [0, 1]")
        if self.k_neighbors < 1:
            out.append("k_neighbors: must be >= 1")
        if self.kernel_scale <= 0:
            out.append("kernel_scale: must be > 0")
        if self.box_constraint <= 0:
            out.append("box_constraint: must be > 0")
        return out

    @classmethod
    def defaults(cls, kind: str, **overrides) -> "ModelParams":
        base = {
            "tree": {"max_splits": 100},
            "boosted": {"max_splits": 20, "n_learners": 30, "learning_rate": 0.1},
            "bagged": {"max_splits": None, "n_learners": 30},
        }.get(kind, {})
        return cls(kind=kind, **{**base, **overrides})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ModelError(f"unknown model parameters: {sorted(unknown)}")
        return cls(**d)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)


def build_estimator(params: ModelParams, seed: int = 0) -> Classifier:
    k = params.kind
    if k == "tree":
        return DecisionTree(params.max_splits, params.split_criterion)
    if k == "naive_bayes":
        return GaussianNaiveBayes(params.nb_likelihood)
    if k == "svm":
        return SVM(params.kernel_scale, params.box_constraint, params.svm_tol, params.svm_max_iter)
    if k == "knn":
        return WeightedKNN(params.k_neighbors, params.distance_weighting)
    if k == "boosted":
        return AdaBoostSAMME(params.n_learners, params.max_splits, params.learning_rate)
    if k == "bagged":
        return BaggedTrees(params.n_learners, params.max_splits, seed, params.bootstrap)
    raise ModelError(f"unknown model kind {k!r}")


def dataset_fingerprint(X, y) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(np.asarray(X, dtype=float)).tobytes())
    h.update(np.ascontiguousarray(np.asarray(y, dtype=np.int64)).tobytes())
    return h.hexdigest()[:16]


class TrainedModel:
    def __init__(self, params: ModelParams, estimator: Classifier, metadata: dict | None = None):
        self.params = params
        self.estimator = estimator
        self.metadata = metadata or {}

    def predict(self, X) -> np.ndarray:
        return self.estimator.predict(np.atleast_2d(np.asarray(X, dtype=float)))

    def predict_scores(self, X) -> np.ndarray:
        return self.estimator.predict_scores(np.atleast_2d(np.asarray(X, dtype=float)))

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "model_kind": self.params.kind,
            "params": self.params.to_dict(),
            "metadata": self.metadata,
            "state": self.estimator.get_state(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        version = d.get("format_version")
        if version != FORMAT_VERSION:
            raise ModelError(f"unsupported model format version {version!r}")
        params = ModelParams.from_dict(d["params"])
        est = build_estimator(params, d.get("metadata", {}).get("seed", 0))
        est.set_state(d["state"])
        return cls(params, est, d.get("metadata", {}))


def train(params: ModelParams, X, y, seed: int = 0) -> TrainedModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    est = build_estimator(params, seed)
    est.fit(X, y)
    meta = {"seed": seed, "dataset_fingerprint": dataset_fingerprint(X, y), "n_train": int(len(y))}
    return TrainedModel(params, est, meta)


def predict(model: TrainedModel | Classifier, x):
    """Class of one feature vector (or a 1-D array of seven values)."""
    from ..pipeline import SeverityClass

    if hasattr(x, "to_array"):
        x = x.to_array()
    label = model.predict(np.asarray(x, dtype=float).reshape(1, -1))[0]
    return SeverityClass(int(label))


def save_model(model: TrainedModel, stream: IO[str]) -> None:
    json.dump(model.to_dict(), stream, sort_keys=True, separators=(",", ":"), allow_nan=False)
    stream.write("\n")


def load_model(stream: IO[str]) -> TrainedModel:
    return TrainedModel.from_dict(json.load(stream))
