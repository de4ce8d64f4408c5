"""Weighted linear SVM with an unregularized bias.

Minimizes

    1/2 ||w||^2 + (lam / N) * sum_i v_i * max(0, 1 - y_i (w.x_i + b))

by dual coordinate descent.  The bias is not penalized: it is folded in as an
augmented feature of value ``s`` whose centre is moved after every inner solve
(a proximal-point iteration on b), so the fixed point is the exact optimum of
the unpenalized problem.  A final exact line search on b for the returned w
and a best-of comparison against the warm start make the result never worse
than the initial model.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass
class SvmProblem:
    features: np.ndarray
    labels: np.ndarray
    weights: np.ndarray | None = None
    lam: float = 100.0

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be an N x D matrix")
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels must have one entry per row")
        if not np.all(np.abs(self.labels) == 1):
            raise ValueError("labels must be -1 or +1")
        if self.weights is None:
            self.weights = np.ones(len(self.labels))
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != self.labels.shape:
            raise ValueError("weights must have one entry per row")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        if not self.lam > 0:
            raise ValueError("lam must be > 0")

    @property
    def costs(self) -> np.ndarray:
        return self.lam * self.weights / len(self.labels)


@dataclass
class LinearModel:
    w: np.ndarray
    b: float = 0.0

    def decision(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.w + self.b

    @classmethod
    def zeros(cls, dim: int) -> "LinearModel":
        return cls(np.zeros(dim), 0.0)


def hinge(m):
    return np.maximum(0.0, 1.0 - np.asarray(m, dtype=np.float64))


def svm_objective(problem: SvmProblem, model: LinearModel) -> float:
    margins = problem.labels * model.decision(problem.features)
    loss = float(np.dot(problem.weights, hinge(margins)))
    return 0.5 * float(np.dot(model.w, model.w)) + problem.lam / len(problem.labels) * loss


@njit(cache=True)
def _dual_cd(X, y, C, c, qdiag, order, w, alpha, s, max_epochs, eps):
    N, D = X.shape
    epochs = 0
    for epoch in range(max_epochs):
        epochs = epoch + 1
        pg_max = -np.inf
        pg_min = np.inf
        for t in range(N):
            i = order[t]
            Ci = C[i]
            if Ci <= 0.0 or qdiag[i] <= 0.0:
                continue
            acc = s * w[D]
            for k in range(D):
                acc += X[i, k] * w[k]
            g = y[i] * acc - c[i]
            a = alpha[i]
            if a <= 0.0:
                pg = min(g, 0.0)
            elif a >= Ci:
                pg = max(g, 0.0)
            else:
                pg = g
            if pg > pg_max:
                pg_max = pg
            if pg < pg_min:
                pg_min = pg
            if pg != 0.0:
                na = min(max(a - g / qdiag[i], 0.0), Ci)
                delta = (na - a) * y[i]
                if delta != 0.0:
                    for k in range(D):
                        w[k] += delta * X[i, k]
                    w[D] += delta * s
                    alpha[i] = na
        if pg_max - pg_min <= eps:
            break
    return epochs


def best_bias(f: np.ndarray, y: np.ndarray, C: np.ndarray) -> float:
    """Exact minimizer over b of sum_i C_i max(0, 1 - y_i (f_i + b)).

    Piecewise linear and convex in b with kinks at t_i = y_i - f_i; the slope
    is -sum{C_i : y_i=+1, t_i > b} + sum{C_i : y_i=-1, t_i < b}.
    """
    active = C > 0
    if not np.any(active):
        return 0.0
    f, y, C = f[active], y[active], C[active]
    t = y - f
    order = np.argsort(t, kind="stable")
    t, y, C = t[order], y[order], C[order]
    pos = np.where(y > 0, C, 0.0)
    neg = np.where(y < 0, C, 0.0)
    # slope just right of kink m: -(positives strictly beyond m) + (negatives up to m)
    pos_after = pos.sum() - np.cumsum(pos)
    neg_upto = np.cumsum(neg)
    slope_right = -pos_after + neg_upto
    m = int(np.searchsorted(slope_right, 0.0, side="left"))
    return float(t[min(m, len(t) - 1)])


def svm_train(problem: SvmProblem, seed: int = 0, tol: float = 1e-6, max_iter: int = 2000,
              fit_intercept: bool = True, init: LinearModel | None = None,
              max_outer: int = 50) -> LinearModel:
    """Approximately minimize the weighted hinge objective.

    ``tol`` bounds the dual projected-gradient gap and the final bias step;
    ``max_iter`` caps the total number of coordinate-descent epochs.
    """
    X, y, C = problem.features, problem.labels, problem.costs
    N, D = X.shape
    live = C > 0
    if fit_intercept and live.any() and np.all(y[live] == y[live][0]):
        raise ValueError("all weighted samples share one label; bias is unbounded")
    if not live.any():
        return LinearModel.zeros(D)

    norms = np.einsum("ij,ij->i", X, X)
    if fit_intercept:
        s = max(1.0, float(np.sqrt(norms.max())))
    else:
        s = 0.0
    qdiag = norms + s * s
    order = np.random.default_rng(seed).permutation(N).astype(np.int64)
    alpha = np.zeros(N)
    wa = np.zeros(D + 1)
    b0 = 0.0
    if init is not None and fit_intercept:
        b0 = float(init.b)

    budget = max_iter
    for _ in range(max_outer if fit_intercept else 1):
        c = 1.0 - y * b0
        used = _dual_cd(X, y, C, c, qdiag, order, wa, alpha, s, max(budget, 1), tol)
        budget -= used
        step = s * wa[D]
        if not fit_intercept:
            break
        b0 += step
        # re-centre: the augmented weight restarts from the same alpha
        if abs(step) <= tol * (1.0 + abs(b0)) or budget <= 0:
            break

    w = wa[:D].copy()
    b = best_bias(X @ w, y, C) if fit_intercept else 0.0
    candidates = [LinearModel(w, b)]
    if fit_intercept:
        candidates.append(LinearModel(w, b0))
    if init is not None:
        candidates.append(LinearModel(np.array(init.w, dtype=np.float64),
                                      float(init.b) if fit_intercept else 0.0))
    zero = LinearModel.zeros(D)
    if fit_intercept:
        zero.b = best_bias(np.zeros(N), y, C)
    candidates.append(zero)
    objs = [svm_objective(problem, m) for m in candidates]
    return candidates[int(np.argmin(objs))]


def ova_labels(labels, k: int) -> np.ndarray:
    return np.where(np.asarray(labels) == k, 1.0, -1.0)


def ova_train(features, labels, n_classes: int, lam: float = 100.0, seed: int = 0,
              tol: float = 1e-6, max_iter: int = 2000,
              init: list[LinearModel] | None = None) -> list[LinearModel]:
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    labels = np.asarray(labels)
    counts = np.bincount(labels, minlength=n_classes)
    if np.any(counts[:n_classes] == 0):
        raise ValueError(f"classes with zero samples: {np.flatnonzero(counts == 0).tolist()}")
    models = []
    for k in range(n_classes):
        prob = SvmProblem(features, ova_labels(labels, k), lam=lam)
        models.append(svm_train(prob, seed=seed + k, tol=tol, max_iter=max_iter,
                                init=None if init is None else init[k]))
    return models


def stack_models(models: list[LinearModel]) -> tuple[np.ndarray, np.ndarray]:
    W = np.stack([m.w for m in models])
    b = np.array([m.b for m in models], dtype=np.float64)
    return W, b


def ova_scores(models: list[LinearModel], X) -> np.ndarray:
    W, b = stack_models(models)
    return np.atleast_2d(np.asarray(X, dtype=np.float64)) @ W.T + b


def ova_predict(models: list[LinearModel], X) -> np.ndarray:
    # np.argmax returns the first maximum: ties go to the lowest class index
    return np.argmax(ova_scores(models, X), axis=1)


def ova_objective(models: list[LinearModel], features, labels, lam: float) -> float:
    return sum(svm_objective(SvmProblem(features, ova_labels(labels, k), lam=lam), m)
               for k, m in enumerate(models))
