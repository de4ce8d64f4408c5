"""Specimen baselines built on per-cell classifiers.

Cell classifiers are one-vs-all linear SVMs over a cell's concatenated
whole/inner/outer lifted descriptors, trained with each specimen's label
copied to its cells (no per-cell ground truth exists).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import INTERPHASE, MITOTIC
from .featmap import FeatureSet, bag_mean
from .linsvm import ova_scores, ova_train

INTERPHASE_ONLY = "interphase"
BOTH = "both"


class NoInterphaseCells(ValueError):
    pass


@dataclass
class CellClassifier:
    cell_type: str
    svms: list

    def scores(self, X) -> np.ndarray:
        return ova_scores(self.svms, X)

    @property
    def n_classes(self) -> int:
        return len(self.svms)


def train_cell_classifier(feats: FeatureSet, cell_type: str = INTERPHASE, lam: float = 100.0,
                          seed: int = 0, tol: float = 1e-3, max_iter: int = 300) -> CellClassifier:
    rows, labels = [], []
    for i in range(len(feats.ids)):
        X = feats.cell_features(i, cell_type)
        rows.append(X)
        labels.append(np.full(len(X), feats.labels[i]))
    X = np.concatenate(rows)
    y = np.concatenate(labels)
    if len(X) == 0:
        raise ValueError(f"no {cell_type} cells to train on")
    return CellClassifier(cell_type, ova_train(X, y, feats.n_classes, lam=lam, seed=seed,
                                               tol=tol, max_iter=max_iter))


def _interphase_scores(clf: CellClassifier, feats: FeatureSet, i: int) -> np.ndarray:
    X = feats.cell_features(i, INTERPHASE)
    if len(X) == 0:
        raise NoInterphaseCells(f"specimen {feats.ids[i]!r} has no interphase cells")
    return clf.scores(X)


def vote(predictions, n_classes: int, weights=None) -> int:
    """Weighted plurality; ties go to the lowest class index."""
    totals = np.bincount(np.asarray(predictions, dtype=np.int64), weights=weights,
                         minlength=n_classes)
    return int(np.argmax(totals))


def dominant_pattern_classify(clf: CellClassifier, feats: FeatureSet, i: int) -> int:
    S = _interphase_scores(clf, feats, i)
    return vote(np.argmax(S, axis=1), clf.n_classes)


def reliability(S: np.ndarray) -> np.ndarray:
    """Per-cell margin between the best and second-best class score."""
    if S.shape[1] < 2:
        return np.ones(len(S))
    top2 = np.sort(S, axis=1)[:, -2:]
    return top2[:, 1] - top2[:, 0]


def mes_classify(clf: CellClassifier, feats: FeatureSet, i: int) -> int:
    S = _interphase_scores(clf, feats, i)
    return vote(np.argmax(S, axis=1), clf.n_classes, reliability(S))


def object_bank_rep(classifiers: dict, feats: FeatureSet, i: int, scope: str = BOTH) -> np.ndarray:
    """Mean per-cell score vectors, interphase block first; absent cell type -> zeros."""
    types = [INTERPHASE] if scope == INTERPHASE_ONLY else [INTERPHASE, MITOTIC]
    blocks = []
    for t in types:
        clf = classifiers[t]
        X = feats.cell_features(i, t)
        blocks.append(bag_mean(X, clf.scores) if len(X) else np.zeros(clf.n_classes))
    return np.concatenate(blocks)


def object_bank_matrix(classifiers: dict, feats: FeatureSet, scope: str = BOTH) -> np.ndarray:
    return np.stack([object_bank_rep(classifiers, feats, i, scope) for i in range(len(feats.ids))])


@dataclass
class ObjectBankClassifier:
    classifiers: dict
    scope: str
    svms: list

    def predict(self, feats: FeatureSet) -> np.ndarray:
        reps = object_bank_matrix(self.classifiers, feats, self.scope)
        return np.argmax(ova_scores(self.svms, reps), axis=1)

    def predict_argmax_mean(self, feats: FeatureSet) -> np.ndarray:
        """Variant without a second stage: argmax of the averaged interphase scores."""
        reps = object_bank_matrix(self.classifiers, feats, self.scope)
        K = self.classifiers[INTERPHASE].n_classes
        return np.argmax(reps[:, :K], axis=1)


def object_bank_fit(classifiers: dict, feats: FeatureSet, scope: str = BOTH, lam: float = 100.0,
                    seed: int = 0) -> ObjectBankClassifier:
    reps = object_bank_matrix(classifiers, feats, scope)
    svms = ova_train(reps, feats.labels, feats.n_classes, lam=lam, seed=seed)
    return ObjectBankClassifier(classifiers, scope, svms)
