"""Explicit feature map for the histogram-intersection kernel and per-region averaging.

The map follows the homogeneous-kernel-map construction: for a scalar x > 0
the intersection kernel min(x, y) = sqrt(xy) exp(-|log(y/x)| / 2) has the
spectrum kappa(w) = 2 / (pi (1 + 4 w^2)), and sampling it at frequencies
0, L, ..., nL gives a (2n+1)-dimensional feature per histogram bin::

    psi_0    = sqrt(x L kappa(0))
    psi_2m-1 = sqrt(2 x L kappa(mL)) cos(mL log x)
    psi_2m   = sqrt(2 x L kappa(mL)) sin(mL log x)

Outputs are interleaved per input bin, so bin t occupies
``[t*(2n+1), (t+1)*(2n+1))`` of the lifted vector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import (CELL_TYPES, N_REGIONS, Dataset, SpecimenSample,
                      region_cell_type)


def default_period(n: int) -> float:
    # log-domain period recommended for the intersection kernel by the
    # homogeneous kernel map reference implementation
    return 2.38 * math.log(n + 0.8) + 5.6


def intersection_spectrum(w):
    w = np.asarray(w, dtype=np.float64)
    return 2.0 / (np.pi * (1.0 + 4.0 * w * w))


@dataclass(frozen=True)
class LiftConfig:
    n: int = 1
    sample_period: float | None = None  # L; None -> 2*pi / default_period(n)

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if self.sample_period is not None and not self.sample_period > 0:
            raise ValueError("sample_period must be > 0")

    @property
    def L(self) -> float:
        if self.sample_period is not None:
            return float(self.sample_period)
        return 2.0 * math.pi / default_period(self.n)

    @property
    def factor(self) -> int:
        return 2 * self.n + 1

    def lifted_dim(self, d: int) -> int:
        return self.factor * d


def lift_histogram(h, cfg: LiftConfig = LiftConfig()) -> np.ndarray:
    """Lift one histogram (or a stack of them along the last axis)."""
    h = np.asarray(h, dtype=np.float64)
    L = cfg.L
    pos = h > 0
    logh = np.log(np.where(pos, h, 1.0))
    out = np.empty(h.shape + (cfg.factor,), dtype=np.float64)
    out[..., 0] = np.sqrt(h * (L * intersection_spectrum(0.0)))
    for m in range(1, cfg.n + 1):
        r = np.sqrt(h * (2.0 * L * intersection_spectrum(m * L)))
        out[..., 2 * m - 1] = r * np.cos(m * L * logh)
        out[..., 2 * m] = r * np.sin(m * L * logh)
    return out.reshape(h.shape[:-1] + (h.shape[-1] * cfg.factor,))


def intersection_kernel(x, y) -> np.ndarray:
    """Exact sum_t min(x_t, y_t) between rows of x and rows of y."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    return np.minimum(x[:, None, :], y[None, :, :]).sum(axis=-1)


def canonical_rows(X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Distinct rows in sorted order, the index of each input row, and multiplicities."""
    rows, inverse, counts = np.unique(np.asarray(X, dtype=np.float64), axis=0,
                                      return_inverse=True, return_counts=True)
    return rows, inverse.reshape(-1), counts


def weighted_mean(V, counts) -> np.ndarray:
    """Count-weighted column means with correctly rounded sums."""
    W = np.asarray(V, dtype=np.float64) * np.asarray(counts, dtype=np.float64)[:, None]
    return np.array([math.fsum(col) for col in W.T]) / float(np.sum(counts))


def bag_mean(X, f=None) -> np.ndarray:
    """Mean of ``f`` over the rows (cells) of ``X``, bit-stable under bag edits.

    ``f`` is evaluated once on the sorted distinct rows, so reordering the
    cells leaves every intermediate unchanged, and listing each cell twice
    only doubles the multiplicities, which scales the sums exactly.
    """
    rows, _, counts = canonical_rows(X)
    return weighted_mean(rows if f is None else f(rows), counts)


def region_histograms(sample: SpecimenSample, j: int) -> np.ndarray:
    """Raw histograms of region ``j`` for every cell of the matching type, (N_ij, d)."""
    rows = [c.regions[j % 3] for c in sample.cells if c.cell_type == region_cell_type(j)]
    return np.stack(rows) if rows else np.zeros((0, sample.cells[0].d))


def average_region_features(sample: SpecimenSample, j: int,
                            cfg: LiftConfig = LiftConfig()) -> np.ndarray:
    H = region_histograms(sample, j)
    if len(H) == 0:
        return np.zeros(cfg.lifted_dim(H.shape[1]))
    return bag_mean(H, lambda rows: lift_histogram(rows, cfg))


def build_u(sample: SpecimenSample, cfg: LiftConfig = LiftConfig()) -> np.ndarray:
    return np.concatenate([average_region_features(sample, j, cfg) for j in range(N_REGIONS)])


@dataclass
class FeatureSet:
    """Lifted features of a dataset, computed once and shared by all methods.

    ``bags[i][j]`` is the (N_ij, D) stack of lifted cell descriptors,
    ``U[i, j]`` their mean (zero when N_ij = 0) and ``raw[i, j]`` the mean
    of the unlifted histograms.
    """
    ids: list
    labels: np.ndarray
    n_classes: int
    d: int
    cfg: LiftConfig
    bags: list
    U: np.ndarray
    raw: np.ndarray
    class_names: tuple = ()

    @property
    def n_regions(self) -> int:
        return self.U.shape[1]

    @property
    def D(self) -> int:
        return self.U.shape[2]

    def u_matrix(self) -> np.ndarray:
        return self.U.reshape(len(self.ids), -1)

    def cell_features(self, i: int, cell_type: str) -> np.ndarray:
        """Concatenated whole/inner/outer lifted descriptors of each cell, (N, 3D)."""
        t = CELL_TYPES.index(cell_type)
        return np.concatenate([self.bags[i][3 * t + p] for p in range(3)], axis=1)

    def subset(self, idx) -> "FeatureSet":
        idx = np.asarray(idx, dtype=np.int64)
        return FeatureSet([self.ids[i] for i in idx], self.labels[idx], self.n_classes,
                          self.d, self.cfg, [self.bags[i] for i in idx], self.U[idx],
                          self.raw[idx], self.class_names)


def featurize(dataset: Dataset, cfg: LiftConfig = LiftConfig()) -> FeatureSet:
    n = len(dataset)
    D = cfg.lifted_dim(dataset.d)
    bags = []
    U = np.zeros((n, N_REGIONS, D))
    raw = np.zeros((n, N_REGIONS, dataset.d))
    for i, s in enumerate(dataset.samples):
        per_region = []
        for j in range(N_REGIONS):
            H = region_histograms(s, j)
            if len(H):
                # lift each distinct histogram once so equal cells get equal rows
                rows, inverse, counts = canonical_rows(H)
                lifted = lift_histogram(rows, cfg)
                X = lifted[inverse]
                U[i, j] = weighted_mean(lifted, counts)
                raw[i, j] = weighted_mean(rows, counts)
            else:
                X = np.zeros((0, D))
            per_region.append(X)
        bags.append(per_region)
    return FeatureSet(dataset.ids, dataset.labels, dataset.n_classes, dataset.d, cfg,
                      bags, U, raw, dataset.class_names)
