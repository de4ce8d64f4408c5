"""Cell-level attribute learning (ARCAD / CRAD) by block coordinate descent.

Each region j owns a basis matrix A_j (D x b) whose columns are linear
attribute classifiers.  A cell's attribute vector for region j is
h = A_j^T x; a specimen descriptor z concatenates the per-region means of h
over the cells of the matching type.  Because the mean commutes with A_j^T,
the real-valued descriptor equals A_j^T xbar_j, where xbar_j is the mean lifted
descriptor; training works on the averaged features directly.

Training alternates between
  1. one-vs-all SVMs on z with the bases fixed, and
  2. per-column basis updates: with the SVMs fixed, each column a_p is refit
     by a weighted hinge problem  sum_i v_i max(0, 1 - q_i a_p.xbar_ij).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset, SpecimenSample
from .featmap import FeatureSet, LiftConfig, bag_mean, featurize, lift_histogram, region_histograms
from .linsvm import (LinearModel, SvmProblem, hinge, ova_objective, ova_train,
                     stack_models, svm_train)

REAL = "real"
BINARIZED = "binarized"
ARCAD = "arcad"
CRAD = "crad"
MODEL_FORMAT = "cellattr-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class AttrConfig:
    bits_per_region: int = 8
    lam: float = 100.0
    basis_lam: float = 1e6
    basis_tol: float = 1e-2
    basis_max_iter: int = 200
    outer_iters: int = 10
    tol: float = 1e-4
    seed: int = 0
    mode: str = REAL
    svm_tol: float = 1e-6
    svm_max_iter: int = 2000

    def __post_init__(self):
        if self.bits_per_region < 1:
            raise ValueError("bits_per_region must be >= 1")
        if self.mode not in (REAL, BINARIZED):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.outer_iters < 1:
            raise ValueError("outer_iters must be >= 1")


@dataclass
class AttrModel:
    bases: list
    svms: list
    mode: str
    scheme: str
    lam: float
    lift: LiftConfig
    d: int
    seed: int = 0
    class_names: tuple = ()
    history: list = field(default_factory=list)

    @property
    def b(self) -> int:
        return self.bases[0].shape[1]

    @property
    def J(self) -> int:
        return len(self.bases)

    @property
    def P(self) -> int:
        return self.J * self.b


@dataclass
class SpecimenDescriptor:
    z: np.ndarray
    b: int

    @property
    def blocks(self) -> list[np.ndarray]:
        return [self.z[j * self.b:(j + 1) * self.b] for j in range(len(self.z) // self.b)]


@dataclass
class BasisUpdateTerms:
    alpha: np.ndarray  # (N, K)
    beta: np.ndarray   # (N, K)
    total: np.ndarray  # (N,) sum_k l(alpha+beta) - l(beta)
    q: np.ndarray
    v: np.ndarray

    @property
    def active(self) -> np.ndarray:
        return self.v > 0


# -- descriptors -----------------------------------------------------------

def cell_attribute_values(A, x, mode: str = REAL) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if A.shape[0] != x.shape[-1]:
        raise ValueError(f"dimension mismatch: basis has {A.shape[0]} rows, x has {x.shape[-1]}")
    h = x @ A
    if mode == BINARIZED:
        return (h > 0).astype(np.float64)
    return h


def specimen_descriptor(sample: SpecimenSample, bases, lift: LiftConfig = LiftConfig(),
                        mode: str = REAL) -> SpecimenDescriptor:
    """Per-region means of per-cell attribute vectors (zero block for absent cell types)."""
    blocks = []
    for j, A in enumerate(bases):
        H = region_histograms(sample, j)
        if len(H) == 0:
            blocks.append(np.zeros(A.shape[1]))
        else:
            blocks.append(bag_mean(H, lambda rows, A=A: cell_attribute_values(
                A, lift_histogram(rows, lift), mode)))
    return SpecimenDescriptor(np.concatenate(blocks), bases[0].shape[1])


def bag_descriptors(bags, bases, mode: str = REAL) -> np.ndarray:
    """Descriptors for a list of bags (bags[i][j] is an (N_ij, D) stack), cell by cell."""
    b = bases[0].shape[1]
    Z = np.zeros((len(bags), len(bases) * b))
    for i, bag in enumerate(bags):
        for j, A in enumerate(bases):
            if len(bag[j]):
                Z[i, j * b:(j + 1) * b] = bag_mean(bag[j], lambda X, A=A: cell_attribute_values(A, X, mode))
    return Z


class _CellIndex:
    """All cells of one region stacked, with per-specimen segment offsets."""

    def __init__(self, bags, j):
        self.counts = np.array([len(bag[j]) for bag in bags], dtype=np.int64)
        D = bags[0][j].shape[1]
        stacks = [bag[j] for bag in bags if len(bag[j])]
        self.X = np.concatenate(stacks) if stacks else np.zeros((0, D))
        self.starts = np.concatenate([[0], np.cumsum(self.counts)[:-1]])
        self.nonempty = self.counts > 0

    def mean(self, values: np.ndarray) -> np.ndarray:
        out = np.zeros((len(self.counts),) + values.shape[1:])
        if self.nonempty.any():
            sums = np.add.reduceat(values, self.starts[self.nonempty], axis=0)
            out[self.nonempty] = sums / self.counts[self.nonempty].reshape(
                (-1,) + (1,) * (values.ndim - 1))
        return out


def _region_block(j: int, A: np.ndarray, feats: FeatureSet, index: dict, mode: str) -> np.ndarray:
    if mode == REAL:
        return feats.U[:, j] @ A
    if j not in index:
        index[j] = _CellIndex(feats.bags, j)
    ci = index[j]
    return ci.mean((ci.X @ A > 0).astype(np.float64))


def descriptors(feats: FeatureSet, bases, mode: str = REAL, index: dict | None = None) -> np.ndarray:
    index = {} if index is None else index
    return np.concatenate([_region_block(j, A, feats, index, mode) for j, A in enumerate(bases)],
                          axis=1)


# -- objectives ------------------------------------------------------------

def _label_matrix(labels, K) -> np.ndarray:
    labels = np.asarray(labels)
    return np.where(labels[:, None] == np.arange(K)[None, :], 1.0, -1.0)


def eval_arcad_objective(svms, bases, bags, labels, lam: float) -> float:
    """Joint objective over SVMs and bases, summed cell by cell.

    sum_k 1/2||w_k||^2 + lam/N sum_i l(y_ik (b_k + sum_j (w_kj / N_ij) sum_c A_j^T x_ijc))
    Regions with N_ij = 0 contribute nothing.
    """
    K = len(svms)
    N = len(bags)
    b = bases[0].shape[1]
    Y = _label_matrix(labels, K)
    total = 0.0
    for k, m in enumerate(svms):
        loss = 0.0
        for i in range(N):
            score = m.b
            for j, A in enumerate(bases):
                X = bags[i][j]
                if len(X) == 0:
                    continue
                cell_sum = np.zeros(b)
                for x in X:
                    cell_sum += A.T @ x
                score += np.dot(m.w[j * b:(j + 1) * b], cell_sum) / len(X)
            loss += max(0.0, 1.0 - Y[i, k] * score)
        total += 0.5 * float(np.dot(m.w, m.w)) + lam / N * loss
    return total


def eval_picodes_objective(svms, bases, u_vectors, labels, lam: float) -> float:
    """Image-level attribute objective with scalar weights w_kp and u = [xbar_1 .. xbar_J].

    sum_k 1/2||w_k||^2 + lam/N sum_i l(y_ik (b_k + sum_p w_kp a_p^T u_i[j(p)]))
    """
    u_vectors = np.atleast_2d(np.asarray(u_vectors, dtype=np.float64))
    J = len(bases)
    D, b = bases[0].shape
    if u_vectors.shape[1] != J * D:
        raise ValueError(f"u has length {u_vectors.shape[1]}, expected {J * D}")
    P = J * b
    K = len(svms)
    N = len(u_vectors)
    Y = _label_matrix(labels, K)
    if any(len(m.w) != P for m in svms):
        raise ValueError("svm dimension != J*b")
    total = 0.0
    for k, m in enumerate(svms):
        loss = 0.0
        for i in range(N):
            score = m.b
            for p in range(P):
                j, col = divmod(p, b)
                a_p = bases[j][:, col]
                score += m.w[p] * np.dot(a_p, u_vectors[i, j * D:(j + 1) * D])
            loss += max(0.0, 1.0 - Y[i, k] * score)
        total += 0.5 * float(np.dot(m.w, m.w)) + lam / N * loss
    return total


# -- basis update ----------------------------------------------------------

def _terms(W: np.ndarray, bias: np.ndarray, Z: np.ndarray, Y: np.ndarray, p: int) -> BasisUpdateTerms:
    alpha = Y * W[:, p][None, :]
    beta = Y * (bias[None, :] + Z @ W.T - np.outer(Z[:, p], W[:, p]))
    total = (hinge(alpha + beta) - hinge(beta)).sum(axis=1)
    # switching the attribute on (value 1) lowers the loss when total < 0,
    # so the column should score these specimens positively
    q = np.where(total < 0, 1.0, -1.0)
    v = np.abs(total)
    return BasisUpdateTerms(alpha, beta, total, q, v)


def basis_update_terms(svms, bases, u_vectors, labels, j: int, col: int,
                       Z: np.ndarray | None = None) -> BasisUpdateTerms:
    """Weights v_i and targets q_i for refitting column ``col`` of region ``j``.

    ``Z`` overrides the descriptors used for the other attributes (needed in
    binarized mode); by default they are the real values a_p'^T u_i.
    """
    u_vectors = np.atleast_2d(np.asarray(u_vectors, dtype=np.float64))
    D, b = bases[0].shape
    if Z is None:
        N = len(u_vectors)
        U = u_vectors.reshape(N, len(bases), D)
        Z = np.concatenate([U[:, jj] @ A for jj, A in enumerate(bases)], axis=1)
    W, bias = stack_models(svms)
    Y = _label_matrix(labels, len(svms))
    return _terms(W, bias, Z, Y, j * b + col)


def surrogate_loss(a, terms: BasisUpdateTerms, xbar) -> float:
    """Weighted mis-classification bound sum_i v_i max(0, 1 - q_i a.xbar_i)."""
    return float(np.dot(terms.v, hinge(terms.q * (np.asarray(xbar) @ a))))


def update_basis_column(a, terms: BasisUpdateTerms, xbar, lam: float = 100.0,
                        seed: int = 0, tol: float = 1e-6, max_iter: int = 2000) -> np.ndarray:
    """Refit one attribute column by a weighted, bias-free linear SVM.

    The fitted column is kept only if it does not increase the surrogate loss.
    """
    a = np.asarray(a, dtype=np.float64)
    if not np.any(terms.v > 0):
        return a.copy()
    xbar = np.asarray(xbar, dtype=np.float64)
    prob = SvmProblem(xbar, terms.q, terms.v, lam=lam)
    fitted = svm_train(prob, seed=seed, tol=tol, max_iter=max_iter, fit_intercept=False,
                       init=LinearModel(a, 0.0)).w
    if surrogate_loss(fitted, terms, xbar) <= surrogate_loss(a, terms, xbar):
        return fitted
    return a.copy()


# -- training --------------------------------------------------------------

def init_bases(rng: np.random.Generator, J: int, D: int, b: int,
               U: np.ndarray | None = None) -> list[np.ndarray]:
    """Seeded random columns.

    Without ``U`` the columns have unit norm.  With training region averages
    ``U`` (N, J, D) each column is rescaled so its specimen-level responses
    have unit standard deviation; unit-norm columns on histogram features give
    nearly constant responses, the first SVM step returns w = 0 and the basis
    updates never receive a nonzero weight.
    """
    bases = []
    for j in range(J):
        A = rng.standard_normal((D, b))
        A /= np.linalg.norm(A, axis=0, keepdims=True)
        if U is not None:
            spread = (U[:, j] @ A).std(axis=0)
            A /= np.where(spread > 0, spread, 1.0)
        bases.append(A)
    return bases


def _as_features(data, lift: LiftConfig) -> FeatureSet:
    if isinstance(data, Dataset):
        return featurize(data, lift)
    return data


def _alternate(feats: FeatureSet, bases: list, regions: list[int], cfg: AttrConfig,
               index: dict, history: list, seed: int) -> list:
    """Block coordinate descent over SVMs on the given regions and their basis columns."""
    K = feats.n_classes
    Y = _label_matrix(feats.labels, K)
    b = cfg.bits_per_region
    Z = np.concatenate([_region_block(j, bases[j], feats, index, cfg.mode) for j in regions],
                       axis=1)
    svms = None
    prev = None
    for it in range(cfg.outer_iters):
        svms = ova_train(Z, feats.labels, K, cfg.lam, seed=seed, tol=cfg.svm_tol,
                         max_iter=cfg.svm_max_iter, init=svms)
        obj = ova_objective(svms, Z, feats.labels, cfg.lam)
        history.append(obj)
        if prev is not None and abs(prev - obj) <= cfg.tol * max(abs(prev), 1e-12):
            break
        prev = obj
        W, bias = stack_models(svms)
        for r, j in enumerate(regions):
            xbar = feats.U[:, j]
            for col in range(b):
                p = r * b + col
                terms = _terms(W, bias, Z, Y, p)
                bases[j][:, col] = update_basis_column(
                    bases[j][:, col], terms, xbar, lam=cfg.basis_lam,
                    seed=seed + p, tol=cfg.basis_tol, max_iter=cfg.basis_max_iter)
                if cfg.mode == REAL:
                    Z[:, p] = xbar @ bases[j][:, col]
                else:
                    Z[:, r * b:(r + 1) * b] = _region_block(j, bases[j], feats, index, cfg.mode)
    return svms


def train_arcad(data, config: AttrConfig = AttrConfig(), lift: LiftConfig = LiftConfig()) -> AttrModel:
    feats = _as_features(data, lift)
    if feats.n_classes < 2:
        raise ValueError("need at least 2 classes")
    rng = np.random.default_rng(config.seed)
    bases = init_bases(rng, feats.n_regions, feats.D, config.bits_per_region, feats.U)
    index: dict = {}
    history: list = []
    svms = _alternate(feats, bases, list(range(feats.n_regions)), config, index, history,
                      config.seed)
    Z = descriptors(feats, bases, config.mode, index)
    svms = ova_train(Z, feats.labels, feats.n_classes, config.lam, seed=config.seed,
                     tol=config.svm_tol, max_iter=config.svm_max_iter, init=svms)
    history.append(ova_objective(svms, Z, feats.labels, config.lam))
    return AttrModel(bases, svms, config.mode, ARCAD, config.lam, feats.cfg, feats.d,
                     config.seed, tuple(feats.class_names), history)


def train_crad(data, config: AttrConfig = AttrConfig(), lift: LiftConfig = LiftConfig()) -> AttrModel:
    feats = _as_features(data, lift)
    if feats.n_classes < 2:
        raise ValueError("need at least 2 classes")
    rng = np.random.default_rng(config.seed)
    bases = init_bases(rng, feats.n_regions, feats.D, config.bits_per_region, feats.U)
    index: dict = {}
    history: list = []
    for j in range(feats.n_regions):
        region_history: list = []
        # per-region SVMs are discarded once the region's bases are trained
        _alternate(feats, bases, [j], config, index, region_history, config.seed)
        history.append(region_history)
    Z = descriptors(feats, bases, config.mode, index)
    svms = ova_train(Z, feats.labels, feats.n_classes, config.lam, seed=config.seed,
                     tol=config.svm_tol, max_iter=config.svm_max_iter)
    history.append(ova_objective(svms, Z, feats.labels, config.lam))
    return AttrModel(bases, svms, config.mode, CRAD, config.lam, feats.cfg, feats.d,
                     config.seed, tuple(feats.class_names), history)


def model_descriptors(model: AttrModel, data) -> np.ndarray:
    return descriptors(_as_features(data, model.lift), model.bases, model.mode)


def predict(model: AttrModel, sample: SpecimenSample) -> tuple[int, np.ndarray]:
    z = specimen_descriptor(sample, model.bases, model.lift, model.mode).z
    W, bias = stack_models(model.svms)
    if W.shape[1] != len(z):
        raise ValueError("descriptor length does not match the SVM dimension")
    scores = W @ z + bias
    return int(np.argmax(scores)), scores


def predict_features(model: AttrModel, feats: FeatureSet) -> np.ndarray:
    W, bias = stack_models(model.svms)
    return np.argmax(descriptors(feats, model.bases, model.mode) @ W.T + bias, axis=1)


# -- serialization ---------------------------------------------------------

def model_to_dict(model: AttrModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "scheme": model.scheme,
        "mode": model.mode,
        "b": model.b,
        "J": model.J,
        "d": model.d,
        "n": model.lift.n,
        "L": model.lift.L,
        "lam": model.lam,
        "seed": model.seed,
        "class_names": list(model.class_names),
        "bases": [A.tolist() for A in model.bases],
        "svms": [{"w": m.w.tolist(), "b": float(m.b)} for m in model.svms],
    }


def model_from_dict(obj: dict) -> AttrModel:
    if obj.get("format") != MODEL_FORMAT:
        raise ValueError("not a cellattr model")
    if obj.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {obj.get('version')!r}")
    bases = [np.array(A, dtype=np.float64) for A in obj["bases"]]
    svms = [LinearModel(np.array(m["w"], dtype=np.float64), float(m["b"])) for m in obj["svms"]]
    lift = LiftConfig(n=int(obj["n"]), sample_period=float(obj["L"]))
    return AttrModel(bases, svms, obj["mode"], obj["scheme"], float(obj["lam"]), lift,
                     int(obj["d"]), int(obj["seed"]), tuple(obj["class_names"]))


def save_model(model: AttrModel, path) -> None:
    # json writes floats with repr, which round-trips bit-exactly
    Path(path).write_text(json.dumps(model_to_dict(model)) + "\n", encoding="utf-8")


def load_model(path) -> AttrModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
