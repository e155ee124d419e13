from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .base import N_CLASSES, Classifier, labels_to_index

VAR_FLOOR_RATIO = 1e-9


class GaussianNaiveBayes(Classifier):
    """Per-class, per-feature normal likelihoods with empirical class priors.

    Variances are unbiased sample variances clamped below at
    ``1e-9 * global feature variance`` (``1e-9`` when a feature is constant
    over the whole training set). Classes absent from training get zero
    probability; a class with exactly one row cannot be fitted.
    """

    kind = "naive_bayes"

    def __init__(self, likelihood: str = "gaussian"):
        if likelihood != "gaussian":
            raise ValueError(f"unsupported naive Bayes likelihood {likelihood!r}")
        self.likelihood = likelihood
        self.mean = None

    def fit(self, X, y) -> "GaussianNaiveBayes":
        X = np.asarray(X, dtype=float)
        yi = labels_to_index(y)
        counts = np.bincount(yi, minlength=N_CLASSES)
        thin = [c + 1 for c in range(N_CLASSES) if counts[c] == 1]
        if thin:
            raise ValueError(f"class {thin[0]} has a single training row; need at least 2")
        if len(X) < 2:
            raise ValueError("need at least 2 training rows")
        global_var = X.var(axis=0, ddof=1)
        floor = VAR_FLOOR_RATIO * np.where(global_var > 0, global_var, 1.0)
        n_features = X.shape[1]
        self.present = counts > 0
        self.mean = np.zeros((N_CLASSES, n_features))
        self.var = np.ones((N_CLASSES, n_features))
        for c in np.flatnonzero(self.present):
            rows = X[yi == c]
            self.mean[c] = rows.mean(axis=0)
            self.var[c] = np.maximum(rows.var(axis=0, ddof=1), floor)
        with np.errstate(divide="ignore"):
            self.log_prior = np.log(counts / counts.sum())
        return self

    def _fitted(self) -> bool:
        return self.mean is not None

    def log_joint(self, X) -> np.ndarray:
        """``log P(c) + sum_j log N(x_j; mu_cj, var_cj)``, shape (n, 3)."""
        self._check_fitted()
        X = np.atleast_2d(np.asarray(X, dtype=float))
        diff = X[:, None, :] - self.mean[None, :, :]
        ll = -0.5 * (np.log(2 * np.pi * self.var)[None] + diff**2 / self.var[None]).sum(axis=2)
        out = ll + self.log_prior[None, :]
        out[:, ~self.present] = -np.inf
        return out

    def log_posterior(self, X) -> np.ndarray:
        joint = self.log_joint(X)
        return joint - logsumexp(joint, axis=1, keepdims=True)

    def predict_scores(self, X) -> np.ndarray:
        return np.exp(self.log_posterior(X))

    def get_params(self) -> dict:
        return {"nb_likelihood": self.likelihood}

    def get_state(self) -> dict:
        self._check_fitted()
        return {
            "present": self.present.tolist(),
            "mean": self.mean.tolist(),
            "var": self.var.tolist(),
            "log_prior": [float(v) if np.isfinite(v) else None for v in self.log_prior],
        }

    def set_state(self, state: dict) -> "GaussianNaiveBayes":
        self.present = np.array(state["present"], dtype=bool)
        self.mean = np.array(state["mean"], dtype=float)
        self.var = np.array(state["var"], dtype=float)
        self.log_prior = np.array(
            [-np.inf if v is None else v for v in state["log_prior"]], dtype=float
        )
        return self
