"""Train-and-score loops over holdout or k-fold split plans."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .learners import ModelParams, train
from .metrics import ConfusionMatrix, accumulate, aggregate_cv
from .pipeline import Dataset, SplitPlan, make_splits
from .seeding import derive_seed


@dataclass
class EvalResult:
    pooled: ConfusionMatrix
    summary: dict
    folds: list[ConfusionMatrix]
    indices: np.ndarray
    predictions: np.ndarray
    truths: np.ndarray

    @property
    def accuracy(self) -> float:
        return self.summary["accuracy"]


def cross_validate(params: ModelParams, dataset: Dataset, plan: SplitPlan, seed: int = 0) -> EvalResult:
    """Fit on each training part, predict its validation part, pool the counts.

    Fold ``i`` trains with ``derive_seed(seed, f"fold{i}")``.
    """
    X, y = dataset.X, dataset.y
    folds, idx, preds = [], [], []
    for f, (tr, va) in enumerate(make_splits(dataset, plan)):
        model = train(params, X[tr], y[tr], seed=derive_seed(seed, f"fold{f}"))
        p = model.predict(X[va])
        folds.append(accumulate(p, y[va]))
        idx.append(va)
        preds.append(p)
    pooled, summary = aggregate_cv(folds)
    summary["split_plan"] = plan.to_dict()
    summary["model"] = params.to_dict()
    indices = np.concatenate(idx)
    return EvalResult(pooled, summary, folds, indices, np.concatenate(preds), y[indices])
