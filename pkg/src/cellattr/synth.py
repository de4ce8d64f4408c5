"""Seeded synthetic specimens with planted per-class, per-region structure.

Every class owns a sparse prototype histogram for each of the six regions.
Within a region the prototypes of different classes use disjoint bins while
``n_classes * support <= d``.  The last ``mitotic_only_classes`` classes share
one interphase prototype, so they can only be told apart from their mitotic
cells.  A cell region histogram is

    normalize(clip(s * prototype + background mixture + noise, 0))

with a per-cell signal strength s drawn around ``separation``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import (INTENSITIES, INTERPHASE, MITOTIC, N_REGIONS, Cell, Dataset,
                      SpecimenSample, quantize)


@dataclass(frozen=True)
class SynthConfig:
    n_classes: int = 8
    d: int = 64
    specimens_per_class: int = 40
    cells_min: int = 20
    cells_max: int = 40
    mitotic_fraction: float = 0.1
    separation: float = 0.1
    noise: float = 0.02
    topic_sparsity: float = 0.08
    n_background: int = 6
    mitotic_only_classes: int = 2
    seed: int = 7

    def __post_init__(self):
        if min(self.n_classes, self.d, self.specimens_per_class, self.cells_min,
               self.n_background) < 1:
            raise ValueError("counts must be >= 1")
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.cells_max < self.cells_min:
            raise ValueError("cells_max < cells_min")
        if not 0.0 <= self.mitotic_fraction <= 1.0:
            raise ValueError("mitotic_fraction must be in [0, 1]")
        if self.noise < 0 or self.separation <= 0:
            raise ValueError("noise must be >= 0 and separation > 0")
        if not 0 <= self.mitotic_only_classes <= self.n_classes:
            raise ValueError("mitotic_only_classes out of range")

    @property
    def support(self) -> int:
        return max(1, int(round(self.topic_sparsity * self.d)))


@dataclass
class PlantReport:
    prototypes: np.ndarray   # (K, 6, d)
    background: np.ndarray   # (n_background, d)
    mitotic_only: tuple
    class_names: tuple

    def entries(self, k: int) -> list[tuple[int, np.ndarray]]:
        return [(j, self.prototypes[k, j]) for j in range(self.prototypes.shape[1])]


def class_names(K: int) -> tuple[str, ...]:
    return tuple(f"class{k}" for k in range(K))


def _sparse_prototype(rng, bins, d) -> np.ndarray:
    p = np.zeros(d)
    p[bins] = rng.dirichlet(np.ones(len(bins)))
    return p


def plant_report(cfg: SynthConfig) -> PlantReport:
    rng = np.random.default_rng([cfg.seed, 0])
    K, d, m = cfg.n_classes, cfg.d, cfg.support
    protos = np.zeros((K, N_REGIONS, d))
    for j in range(N_REGIONS):
        perm = rng.permutation(d)
        for k in range(K):
            if K * m <= d:
                bins = perm[k * m:(k + 1) * m]
            else:
                bins = rng.choice(d, size=m, replace=False)
            protos[k, j] = _sparse_prototype(rng, bins, d)
        if j < 3 and cfg.mitotic_only_classes:
            first = K - cfg.mitotic_only_classes
            protos[first + 1:, j] = protos[first, j]
    background = rng.dirichlet(np.ones(d), size=cfg.n_background)
    mito_only = tuple(range(K - cfg.mitotic_only_classes, K))
    return PlantReport(protos, background, mito_only, class_names(K))


def expected_histograms(cfg: SynthConfig, plant: PlantReport | None = None) -> np.ndarray:
    """(K, 6, d) noise-free mean cell histogram of each class and region.

    Uses the mean signal strength and the mean background mixture; clipping
    and renormalization of noisy cells make the true mean differ slightly.
    """
    plant = plant_report(cfg) if plant is None else plant
    h = cfg.separation * plant.prototypes + plant.background.mean(axis=0)
    return h / h.sum(axis=2, keepdims=True)


def _cell_histograms(rng, cfg: SynthConfig, plant: PlantReport, k: int, cell_type: str) -> np.ndarray:
    offset = 0 if cell_type == INTERPHASE else 3
    H = np.empty((3, cfg.d))
    strength = cfg.separation * rng.uniform(0.5, 1.5)
    for part in range(3):
        mix = rng.dirichlet(np.ones(cfg.n_background))
        h = strength * plant.prototypes[k, offset + part] + mix @ plant.background
        h = h + cfg.noise * rng.standard_normal(cfg.d)
        h = np.clip(h, 0.0, None)
        total = h.sum()
        H[part] = h / total if total > 0 else np.full(cfg.d, 1.0 / cfg.d)
    return H


def generate(cfg: SynthConfig = SynthConfig()) -> Dataset:
    plant = plant_report(cfg)
    rng = np.random.default_rng([cfg.seed, 1])
    samples = []
    for k in range(cfg.n_classes):
        for s in range(cfg.specimens_per_class):
            n_cells = int(rng.integers(cfg.cells_min, cfg.cells_max + 1))
            n_mito = int(round(cfg.mitotic_fraction * n_cells))
            if cfg.mitotic_fraction > 0:
                n_mito = max(1, n_mito)
            n_mito = min(n_mito, n_cells)
            types = [INTERPHASE] * (n_cells - n_mito) + [MITOTIC] * n_mito
            rng.shuffle(types)
            cells = []
            for t in types:
                H = quantize(_cell_histograms(rng, cfg, plant, k, t))
                cells.append(Cell(t, H))
            intensity = INTENSITIES[int(rng.integers(2))]
            samples.append(SpecimenSample(f"s{k:02d}_{s:03d}", k, intensity, tuple(cells)))
    return Dataset(tuple(samples), plant.class_names, cfg.d)
