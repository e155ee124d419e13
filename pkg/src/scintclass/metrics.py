"""Confusion matrices and the accuracy / precision / recall derived from them.

Orientation is fixed: rows are predicted classes, columns ground truth, so
precision reads along a row and recall down a column. Undefined rates
(nothing predicted as, or nothing truly in, a class) are ``nan`` and are
written as ``null`` in JSON.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

CLASSES = (1, 2, 3)


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.shape != (3, 3):
            raise MetricsError(f"confusion matrix must be 3x3, got {c.shape}")
        if np.any(c < 0) or np.any(c != np.round(c)):
            raise MetricsError("confusion counts must be non-negative integers")
        c = c.astype(np.int64)
        c.flags.writeable = False
        object.__setattr__(self, "counts", c)

    @classmethod
    def zeros(cls) -> "ConfusionMatrix":
        return cls(np.zeros((3, 3), dtype=np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)

    def __eq__(self, other) -> bool:
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    def __hash__(self):
        return hash(self.counts.tobytes())

    def cell(self, predicted: int, truth: int) -> int:
        return int(self.counts[predicted - 1, truth - 1])


def accumulate(predictions: Sequence[int], truths: Sequence[int]) -> ConfusionMatrix:
    p = np.asarray(predictions, dtype=np.int64).reshape(-1)
    t = np.asarray(truths, dtype=np.int64).reshape(-1)
    if len(p) != len(t):
        raise MetricsError(f"{len(p)} predictions but {len(t)} ground-truth labels")
    if not (np.isin(p, CLASSES).all() and np.isin(t, CLASSES).all()):
        raise MetricsError("labels must be 1, 2 or 3")
    counts = np.zeros((3, 3), dtype=np.int64)
    np.add.at(counts, (p - 1, t - 1), 1)
    return ConfusionMatrix(counts)


def accuracy(cm: ConfusionMatrix) -> float:
    """Correct predictions over all predictions (trace / total)."""
    if cm.total == 0:
        raise MetricsError("accuracy of an empty confusion matrix is undefined")
    return float(np.trace(cm.counts) / cm.total)


def one_vs_rest(cm: ConfusionMatrix, c: int) -> dict[str, int]:
    """TP, FP, FN, TN for class ``c`` against the other two."""
    k = c - 1
    tp = int(cm.counts[k, k])
    fp = int(cm.counts[k, :].sum()) - tp
    fn = int(cm.counts[:, k].sum()) - tp
    tn = cm.total - tp - fp - fn
    return {"tp": tp, "fp": fp, "fn": fn, "tn": tn}


def binary_accuracy(cm: ConfusionMatrix, c: int) -> float:
    """(TP + TN) / (TP + TN + FP + FN) for the one-vs-rest view of class ``c``."""
    r = one_vs_rest(cm, c)
    total = r["tp"] + r["tn"] + r["fp"] + r["fn"]
    if total == 0:
        raise MetricsError("accuracy of an empty confusion matrix is undefined")
    return (r["tp"] + r["tn"]) / total


def precision_recall(cm: ConfusionMatrix, c: int) -> tuple[float, float]:
    """One-vs-rest (precision, recall) for class ``c``; ``nan`` when undefined."""
    if c not in CLASSES:
        raise MetricsError(f"class must be 1, 2 or 3, got {c}")
    r = one_vs_rest(cm, c)
    pred = r["tp"] + r["fp"]
    true = r["tp"] + r["fn"]
    precision = r["tp"] / pred if pred else math.nan
    recall = r["tp"] / true if true else math.nan
    return precision, recall


def summarize(cm: ConfusionMatrix) -> dict:
    per_class = {}
    for c in CLASSES:
        p, r = precision_recall(cm, c)
        per_class[str(c)] = {"precision": p, "recall": r}
    return {
        "total": cm.total,
        "accuracy": accuracy(cm) if cm.total else math.nan,
        "per_class": per_class,
    }


def aggregate_cv(folds: Iterable[ConfusionMatrix]) -> tuple[ConfusionMatrix, dict]:
    """Pool fold matrices by summation and summarise the pooled matrix."""
    folds = list(folds)
    if not folds:
        raise MetricsError("need at least one fold")
    pooled = ConfusionMatrix.zeros()
    for f in folds:
        pooled = pooled + f
    summary = summarize(pooled)
    summary["n_folds"] = len(folds)
    summary["fold_accuracies"] = [accuracy(f) if f.total else math.nan for f in folds]
    return pooled, summary


# -- report formats ---------------------------------------------------------

def _pct(x: float) -> str:
    return "n/a" if x is None or math.isnan(x) else f"{100 * x:.2f}%"


def _nan_to_none(obj):
    if isinstance(obj, float) and math.isnan(obj):
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_nan_to_none(v) for v in obj]
    return obj


def to_json_dict(cm: ConfusionMatrix, split_plan: dict | None = None, extra: dict | None = None) -> dict:
    out = {
        "orientation": "rows=predicted, columns=ground_truth",
        "classes": list(CLASSES),
        "counts": cm.counts.tolist(),
        **summarize(cm),
        "split_plan": split_plan,
    }
    if extra:
        out.update(extra)
    return _nan_to_none(out)


def from_json_dict(d: dict) -> ConfusionMatrix:
    return ConfusionMatrix(np.array(d["counts"], dtype=np.int64))


def to_json(cm: ConfusionMatrix, split_plan: dict | None = None, extra: dict | None = None) -> str:
    return json.dumps(to_json_dict(cm, split_plan, extra), indent=2, sort_keys=True, allow_nan=False)


def to_csv(cm: ConfusionMatrix) -> str:
    """Counts with a precision column and recall/accuracy footer row."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["predicted\\truth", "class_1", "class_2", "class_3", "precision"])
    for c in CLASSES:
        p, _ = precision_recall(cm, c)
        w.writerow([f"class_{c}", *cm.counts[c - 1].tolist(), "" if math.isnan(p) else repr(p)])
    recalls = [precision_recall(cm, c)[1] for c in CLASSES]
    w.writerow(["recall", *["" if math.isnan(r) else repr(r) for r in recalls],
                repr(accuracy(cm)) if cm.total else ""])
    return buf.getvalue()


def to_text(cm: ConfusionMatrix) -> str:
    """Aligned table in the layout of a printed confusion matrix."""
    width = max(9, max(len(f"{v:,}") for v in cm.counts.ravel()) + 2)
    head = f"{'':>12}" + "".join(f"{'Class ' + str(c):>{width}}" for c in CLASSES) + f"{'Precision':>{width + 2}}"
    lines = [f"{'':>12}{'Ground truth':^{3 * width}}", head]
    for c in CLASSES:
        p, _ = precision_recall(cm, c)
        row = "".join(f"{v:>{width},}" for v in cm.counts[c - 1])
        lines.append(f"{'Pred. ' + str(c):>12}{row}{_pct(p):>{width + 2}}")
    recalls = "".join(f"{_pct(precision_recall(cm, c)[1]):>{width}}" for c in CLASSES)
    acc = _pct(accuracy(cm)) if cm.total else "n/a"
    lines.append(f"{'Recall':>12}{recalls}{'Acc ' + acc:>{width + 2}}")
    return "\n".join(lines) + "\n"
