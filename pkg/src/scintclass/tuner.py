"""Bayesian optimisation over small integer search spaces.

A Gaussian process with a squared-exponential kernel models the objective
on the unit cube (log-scaled axes where requested). After a scrambled Halton
initial design, each iteration scores a seeded batch of random candidates by
expected improvement and evaluates the best one not yet tried.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.stats import norm, qmc

LENGTH_SCALES = (0.05, 0.1, 0.2, 0.3, 0.5, 1.0, 2.0)
NOISE_VAR = 1e-6
MAX_JITTER = 1e-2


class SurrogateError(RuntimeError):
    pass


@dataclass(frozen=True)
class Dimension:
    name: str
    lo: int
    hi: int
    log: bool = False

    def __post_init__(self):
        if self.lo < 1:
            raise ValueError(f"{self.name}: lower bound must be >= 1, got {self.lo}")
        if self.hi < self.lo:
            raise ValueError(f"{self.name}: upper bound {self.hi} below lower bound {self.lo}")

    def to_unit(self, v):
        v = np.asarray(v, dtype=float)
        if self.hi == self.lo:
            return np.zeros_like(v)
        if self.log:
            return (np.log(v) - math.log(self.lo)) / (math.log(self.hi) - math.log(self.lo))
        return (v - self.lo) / (self.hi - self.lo)

    def from_unit(self, u) -> np.ndarray:
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        if self.log:
            v = np.exp(math.log(self.lo) + u * (math.log(self.hi) - math.log(self.lo)))
        else:
            v = self.lo + u * (self.hi - self.lo)
        return np.clip(np.floor(v + 0.5), self.lo, self.hi).astype(np.int64)

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple[Dimension, ...]

    @classmethod
    def of(cls, **bounds) -> "SearchSpace":
        """``SearchSpace.of(splits=(1, 500), learners=(10, 300, "log"))``."""
        dims = []
        for name, b in bounds.items():
            dims.append(Dimension(name, int(b[0]), int(b[1]), len(b) > 2 and b[2] == "log"))
        return cls(tuple(dims))

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dims]

    @property
    def size(self) -> int:
        return math.prod(d.size for d in self.dims)

    def to_unit(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.column_stack([d.to_unit(points[:, i]) for i, d in enumerate(self.dims)])

    def from_unit(self, U: np.ndarray) -> np.ndarray:
        U = np.atleast_2d(U)
        return np.column_stack([d.from_unit(U[:, i]) for i, d in enumerate(self.dims)])

    def as_params(self, point) -> dict[str, int]:
        return {d.name: int(v) for d, v in zip(self.dims, point)}

    def to_dict(self) -> dict:
        return {d.name: {"lo": d.lo, "hi": d.hi, "log": d.log} for d in self.dims}


@dataclass
class TrialRecord:
    params: dict[str, int]
    objective: float
    wall_time: float
    iteration: int
    failed: bool = False
    error: str = ""

    def __post_init__(self):
        if not self.failed and not 0.0 <= self.objective <= 1.0:
            raise ValueError(f"objective {self.objective} outside [0, 1]")


# -- acquisition ------------------------------------------------------------

def expected_improvement(mean, stdev, best_so_far):
    """EI for maximisation; with zero spread it is ``max(mean - best, 0)``."""
    mean = np.asarray(mean, dtype=float)
    stdev = np.asarray(stdev, dtype=float)
    if np.any(stdev < 0):
        raise ValueError("stdev must be non-negative")
    gain = mean - best_so_far
    safe = np.where(stdev > 0, stdev, 1.0)
    with np.errstate(over="ignore", divide="ignore"):
        z = gain / safe
        ei = gain * norm.cdf(z) + safe * norm.pdf(z)
    out = np.where(stdev > 0, ei, np.maximum(gain, 0.0))
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


# -- surrogate --------------------------------------------------------------

def _sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return ((A[:, None, :] - B[None, :, :]) ** 2).sum(-1)


class GaussianProcess:
    """Zero-mean GP on standardised targets; length scale by marginal likelihood."""

    def __init__(self, length_scales=LENGTH_SCALES, noise_var: float = NOISE_VAR):
        self.length_scales = tuple(length_scales)
        self.noise_var = noise_var

    def fit(self, U, y) -> "GaussianProcess":
        U = np.atleast_2d(np.asarray(U, dtype=float))
        y = np.asarray(y, dtype=float)
        if len(y) < 2:
            raise SurrogateError("need at least 2 observations")
        self.y_mean = float(y.mean())
        std = float(y.std())
        self.y_scale = std if std > 0 else 1.0
        t = (y - self.y_mean) / self.y_scale
        D = _sq_dists(U, U)
        best = None
        for ell in self.length_scales:
            K = np.exp(-0.5 * D / ell**2)
            chol, jitter = self._factor(K)
            alpha = cho_solve(chol, t)
            lml = -0.5 * t @ alpha - np.log(np.diag(chol[0])).sum()
            if best is None or lml > best[0]:
                best = (lml, ell, chol, alpha, jitter)
        _, self.length_scale, self.chol, self.alpha, self.jitter = best
        self.U = U
        return self

    def _factor(self, K: np.ndarray):
        jitter = self.noise_var
        while jitter <= MAX_JITTER:
            try:
                return cho_factor(K + jitter * np.eye(len(K)), lower=True), jitter
            except np.linalg.LinAlgError:
                jitter *= 10
        raise SurrogateError("kernel matrix stayed singular after jitter escalation")

    def predict(self, U) -> tuple[np.ndarray, np.ndarray]:
        U = np.atleast_2d(np.asarray(U, dtype=float))
        Ks = np.exp(-0.5 * _sq_dists(U, self.U) / self.length_scale**2)
        mean = Ks @ self.alpha
        v = cho_solve(self.chol, Ks.T)
        var = np.maximum(1.0 - np.einsum("ij,ji->i", Ks, v), 0.0)
        return self.y_mean + self.y_scale * mean, self.y_scale * np.sqrt(var)


class Surrogate:
    """GP posterior over points of a :class:`SearchSpace` (integer coordinates)."""

    def __init__(self, space: SearchSpace, gp: GaussianProcess):
        self.space = space
        self.gp = gp

    def __call__(self, points) -> tuple[np.ndarray, np.ndarray]:
        return self.gp.predict(self.space.to_unit(np.asarray(points, dtype=float)))


def fit_surrogate(trials: list[TrialRecord], space: SearchSpace) -> Surrogate:
    ok = [t for t in trials if not t.failed]
    if len(ok) < 2:
        raise SurrogateError("need at least 2 successful trials to fit the surrogate")
    P = np.array([[t.params[n] for n in space.names] for t in ok], dtype=float)
    y = np.array([t.objective for t in ok])
    return Surrogate(space, GaussianProcess().fit(space.to_unit(P), y))


# -- driver -----------------------------------------------------------------

@dataclass
class TuneResult:
    best: TrialRecord
    history: list[TrialRecord]
    failures: list[TrialRecord] = field(default_factory=list)


def tune(
    objective: Callable[[dict[str, int]], float],
    space: SearchSpace,
    n_iterations: int = 50,
    n_initial: int = 10,
    seed: int = 0,
    n_candidates: int = 512,
    max_redraws: int = 20,
) -> TuneResult:
    """Maximise ``objective`` over ``space`` with ``n_iterations`` evaluations.

    Failed evaluations (the objective raised) use up an iteration but stay
    out of the history. The run ends early if every point has been tried.
    """
    if not 1 <= n_initial <= n_iterations:
        raise ValueError("need 1 <= n_initial <= n_iterations")
    rng = np.random.default_rng(seed)
    d = len(space.dims)
    seen: set[tuple[int, ...]] = set()
    history: list[TrialRecord] = []
    failures: list[TrialRecord] = []

    def evaluate(point: np.ndarray, it: int) -> None:
        params = space.as_params(point)
        seen.add(tuple(int(v) for v in point))
        t0 = time.perf_counter()
        try:
            value = float(objective(params))
            rec = TrialRecord(params, value, time.perf_counter() - t0, it)
        except Exception as exc:  # noqa: BLE001 - any objective failure is recorded
            failures.append(TrialRecord(params, math.nan, time.perf_counter() - t0, it, True, repr(exc)))
            return
        history.append(rec)

    def fresh(points: np.ndarray) -> list[np.ndarray]:
        out, local = [], set()
        for p in points:
            key = tuple(int(v) for v in p)
            if key not in seen and key not in local:
                local.add(key)
                out.append(p)
        return out

    halton = qmc.Halton(d, scramble=True, seed=rng)
    initial: list[np.ndarray] = []
    keys: set[tuple[int, ...]] = set()
    for _ in range(max_redraws):
        for p in space.from_unit(halton.random(n_initial)):
            key = tuple(int(v) for v in p)
            if key not in keys and len(initial) < n_initial:
                keys.add(key)
                initial.append(p)
        if len(initial) >= min(n_initial, space.size):
            break
    for it, p in enumerate(initial):
        evaluate(p, it)

    it = len(initial)
    while it < n_iterations and len(seen) < space.size:
        cands: list[np.ndarray] = []
        for _ in range(max_redraws):
            cands = fresh(space.from_unit(rng.random((n_candidates, d))))
            if cands:
                break
        if not cands and space.size <= 1_000_000:
            remaining = [p for p in _enumerate(space) if tuple(p) not in seen]
            if not remaining:
                break
            cands = remaining
        if not cands:
            break
        cand = np.array(cands)
        if len(history) >= 2:
            model = fit_surrogate(history, space)
            mean, std = model(cand)
            best = max(t.objective for t in history)
            choice = int(np.argmax(expected_improvement(mean, std, best)))
        else:
            choice = 0
        evaluate(cand[choice], it)
        it += 1

    if not history:
        raise RuntimeError("every objective evaluation failed")
    best = max(history, key=lambda t: t.objective)
    return TuneResult(best, history, failures)


def _enumerate(space: SearchSpace) -> list[np.ndarray]:
    grids = np.meshgrid(*[np.arange(d.lo, d.hi + 1) for d in space.dims], indexing="ij")
    return list(np.column_stack([g.ravel() for g in grids]))
