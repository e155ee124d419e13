"""Gaussian-kernel soft-margin SVM trained by SMO, one-vs-one for 3 classes.

The solver follows the second-order working-set selection used by LIBSVM:
the first index maximises the KKT violation, the second maximises the
guaranteed decrease of the dual objective. It stops once the maximal
violating pair gap drops below ``tol``.
"""
from __future__ import annotations

from collections import OrderedDict
from itertools import combinations

import numpy as np

from .base import CLASS_LABELS, N_CLASSES, Classifier, Standardizer, labels_to_index

TAU = 1e-12
FULL_KERNEL_MAX_ROWS = 3000


class SVMConvergenceError(RuntimeError):
    def __init__(self, iterations: int, gap: float):
        super().__init__(f"SMO did not converge after {iterations} iterations (gap {gap:.3g})")
        self.iterations = iterations
        self.gap = gap


def gaussian_kernel(A, B, scale: float) -> np.ndarray:
    """``exp(-||a - b||^2 / scale^2)`` for every row pair."""
    A = np.atleast_2d(np.asarray(A, dtype=float)) / scale
    B = np.atleast_2d(np.asarray(B, dtype=float)) / scale
    sq = (A**2).sum(1)[:, None] + (B**2).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-np.maximum(sq, 0.0))


class _KernelColumns:
    def __init__(self, X: np.ndarray, scale: float, cache_mb: float = 200.0):
        self.X = X
        self.scale = scale
        n = len(X)
        self.full = gaussian_kernel(X, X, scale) if n <= FULL_KERNEL_MAX_ROWS else None
        self.capacity = max(2, int(cache_mb * 2**20 / (8 * max(n, 1))))
        self.cache: OrderedDict[int, np.ndarray] = OrderedDict()

    def __call__(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[:, i]
        col = self.cache.get(i)
        if col is None:
            col = gaussian_kernel(self.X, self.X[i], self.scale)[:, 0]
            self.cache[i] = col
            if len(self.cache) > self.capacity:
                self.cache.popitem(last=False)
        else:
            self.cache.move_to_end(i)
        return col


class BinarySVM:
    """One binary machine; labels are +1/-1."""

    def __init__(self, box_constraint: float = 1.0, kernel_scale: float = 0.66,
                 tol: float = 1e-3, max_iter: int | None = None):
        self.C = float(box_constraint)
        self.kernel_scale = float(kernel_scale)
        self.tol = tol
        self.max_iter = max_iter
        self.support_ = None

    def fit(self, X, y) -> "BinarySVM":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n = len(y)
        if not (np.any(y > 0) and np.any(y < 0)):
            raise ValueError("binary SVM needs both labels present")
        C = self.C
        kcol = _KernelColumns(X, self.kernel_scale)
        QD = np.ones(n)  # Gaussian kernel diagonal
        alpha = np.zeros(n)
        G = -np.ones(n)
        max_iter = self.max_iter if self.max_iter is not None else max(10_000_000, 100 * n)

        it = 0
        gap = np.inf
        while True:
            yG = y * G
            up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
            low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
            if not up.any() or not low.any():
                gap = 0.0
                break
            cand = np.where(up, -yG, -np.inf)
            i = int(np.argmax(cand))
            gmax = cand[i]
            gmax2 = np.max(np.where(low, yG, -np.inf))
            gap = gmax + gmax2
            if gap < self.tol:
                break
            if it >= max_iter:
                raise SVMConvergenceError(it, float(gap))
            Ki = kcol(i)
            grad_diff = gmax + yG
            quad = QD[i] + QD - 2.0 * Ki
            quad = np.where(quad > 0, quad, TAU)
            obj = np.where(low & (grad_diff > 0), -(grad_diff**2) / quad, np.inf)
            j = int(np.argmin(obj))
            if not np.isfinite(obj[j]):
                break
            Kj = kcol(j)
            self._update_pair(i, j, alpha, y, G, Ki, Kj, C)
            it += 1

        self.n_iter_ = it
        self.gap_ = float(gap)
        self.alpha = alpha
        self.y = y
        self.rho = self._rho(alpha, y, G, C)
        sv = alpha > 0
        self.support_ = np.flatnonzero(sv)
        self.support_vectors = X[sv]
        self.dual_coef = (alpha * y)[sv]
        return self

    @staticmethod
    def _update_pair(i, j, alpha, y, G, Ki, Kj, C):
        Kij = Ki[j]
        ai_old, aj_old = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = 2.0 + 2.0 * (-Kij)
            quad = quad if quad > 0 else TAU
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            elif alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            elif alpha[j] > C:
                alpha[j] = C
                alpha[i] = C + diff
        else:
            quad = 2.0 - 2.0 * Kij
            quad = quad if quad > 0 else TAU
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            elif alpha[j] < 0:
                alpha[j] = 0.0
                alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            elif alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = total
        dai = alpha[i] - ai_old
        daj = alpha[j] - aj_old
        # Q[:, t] = y * y[t] * K[:, t]
        G += y * (y[i] * dai * Ki + y[j] * daj * Kj)

    @staticmethod
    def _rho(alpha, y, G, C) -> float:
        yG = y * G
        at_upper = alpha >= C
        at_lower = alpha <= 0
        free = ~at_upper & ~at_lower
        if free.any():
            return float(yG[free].mean())
        ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
        lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
        ub = yG[ub_mask].min() if ub_mask.any() else np.inf
        lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
        return float((ub + lb) / 2)

    def decision_function(self, X) -> np.ndarray:
        K = gaussian_kernel(X, self.support_vectors, self.kernel_scale)
        return K @ self.dual_coef - self.rho

    def dual_objective(self) -> float:
        """``sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij`` over support vectors."""
        K = gaussian_kernel(self.support_vectors, self.support_vectors, self.kernel_scale)
        return float(np.abs(self.dual_coef).sum() - 0.5 * self.dual_coef @ K @ self.dual_coef)

    def to_dict(self) -> dict:
        return {
            "support_vectors": self.support_vectors.tolist(),
            "dual_coef": self.dual_coef.tolist(),
            "rho": self.rho,
        }

    @classmethod
    def from_dict(cls, d: dict, box_constraint, kernel_scale) -> "BinarySVM":
        m = cls(box_constraint, kernel_scale)
        m.support_vectors = np.array(d["support_vectors"], dtype=float)
        m.dual_coef = np.array(d["dual_coef"], dtype=float)
        m.rho = float(d["rho"])
        m.support_ = np.arange(len(m.dual_coef))
        return m


class SVM(Classifier):
    """One-vs-one multiclass SVM on z-scored features; majority vote."""

    kind = "svm"

    def __init__(self, kernel_scale: float = 0.66, box_constraint: float = 1.0,
                 tol: float = 1e-3, max_iter: int | None = None):
        if kernel_scale <= 0 or box_constraint <= 0:
            raise ValueError("kernel_scale and box_constraint must be positive")
        self.kernel_scale = kernel_scale
        self.box_constraint = box_constraint
        self.tol = tol
        self.max_iter = max_iter
        self.machines = None

    def fit(self, X, y) -> "SVM":
        yi = labels_to_index(y)
        present = np.flatnonzero(np.bincount(yi, minlength=N_CLASSES))
        if len(present) < 2:
            raise ValueError("SVM needs at least two classes in the training set")
        self.scaler = Standardizer().fit(X)
        Z = self.scaler.transform(X)
        self.machines = []
        for a, b in combinations(present, 2):
            rows = (yi == a) | (yi == b)
            m = BinarySVM(self.box_constraint, self.kernel_scale, self.tol, self.max_iter)
            m.fit(Z[rows], np.where(yi[rows] == a, 1.0, -1.0))
            self.machines.append(((int(a), int(b)), m))
        return self

    def _fitted(self) -> bool:
        return self.machines is not None

    def predict_scores(self, X) -> np.ndarray:
        self._check_fitted()
        Z = self.scaler.transform(X)
        votes = np.zeros((len(Z), N_CLASSES))
        for (a, b), m in self.machines:
            pos = m.decision_function(Z) > 0
            votes[pos, a] += 1
            votes[~pos, b] += 1
        return votes / len(self.machines)

    def get_params(self) -> dict:
        return {"kernel_scale": self.kernel_scale, "box_constraint": self.box_constraint,
                "svm_tol": self.tol, "svm_max_iter": self.max_iter}

    def get_state(self) -> dict:
        self._check_fitted()
        return {
            "standardizer": self.scaler.to_dict(),
            "machines": [
                {"classes": [int(CLASS_LABELS[a]), int(CLASS_LABELS[b])], **m.to_dict()}
                for (a, b), m in self.machines
            ],
        }

    def set_state(self, state: dict) -> "SVM":
        self.scaler = Standardizer.from_dict(state["standardizer"])
        self.machines = []
        for d in state["machines"]:
            a, b = (int(c) - 1 for c in d["classes"])
            self.machines.append(
                ((a, b), BinarySVM.from_dict(d, self.box_constraint, self.kernel_scale))
            )
        return self
