"""Per-class attribute ranking with exemplar cells for expert inspection."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attrlearn import BINARIZED, AttrModel, descriptors
from .dataset import Dataset, region_cell_type, REGION_NAMES
from .featmap import FeatureSet, featurize

N_EXEMPLARS = 5


@dataclass(frozen=True)
class RankedAttribute:
    region: int
    column: int
    frequency: float


@dataclass
class AttributeReport:
    class_names: tuple
    ranked: dict                      # class index -> list[RankedAttribute]
    excluded: list                    # [(region, column)]
    selected_by: dict                 # (region, column) -> number of classes
    positive: dict = field(default_factory=dict)   # (region, column) -> [cell id]
    negative: dict = field(default_factory=dict)

    def top(self, k: int) -> RankedAttribute | None:
        return self.ranked[k][0] if self.ranked[k] else None

    def to_text(self) -> str:
        lines = []
        for k, name in enumerate(self.class_names):
            lines.append(f"[{name}]")
            for r in self.ranked[k]:
                key = (r.region, r.column)
                lines.append(f"  region {r.region} ({REGION_NAMES[r.region]}) attr {r.column}"
                             f"  freq {r.frequency:.3f}")
                lines.append(f"    +: {' '.join(self.positive.get(key, []))}")
                lines.append(f"    -: {' '.join(self.negative.get(key, []))}")
        ex = ", ".join(f"{j}/{c}" for j, c in self.excluded) or "none"
        lines.append(f"excluded: {ex}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "rank", "region", "attribute", "frequency", "positive", "negative"])
        for k, name in enumerate(self.class_names):
            for rank, r in enumerate(self.ranked[k]):
                key = (r.region, r.column)
                w.writerow([name, rank, r.region, r.column, f"{r.frequency:.6f}",
                            " ".join(self.positive.get(key, [])),
                            " ".join(self.negative.get(key, []))])
        return buf.getvalue()

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "attributes.txt").write_text(self.to_text())
        (out / "attributes.csv").write_text(self.to_csv())


def presence(model: AttrModel, feats: FeatureSet, Z: np.ndarray | None = None) -> np.ndarray:
    """(N, P) boolean: attribute present in the specimen.

    Real mode: positive mean attribute value.  Binarized mode: the mean of the
    signed code 2h - 1 is positive, i.e. a strict majority of cells fire.
    """
    if Z is None:
        Z = descriptors(feats, model.bases, model.mode)
    if model.mode == BINARIZED:
        return 2.0 * Z - 1.0 > 0
    return Z > 0


def _cell_ids(dataset: Dataset, j: int) -> list[str]:
    t = region_cell_type(j)
    return [f"{s.id}#{c}" for s in dataset.samples
            for c, cell in enumerate(s.cells) if cell.cell_type == t]


def rank_attributes(present: np.ndarray, labels, class_names: tuple, keys: list,
                    top_m: int = 8, exclusion_threshold: int = 4,
                    strength: np.ndarray | None = None) -> AttributeReport:
    """Selection and exclusion over an (N, len(keys)) presence matrix.

    Per class, attributes are ordered by presence frequency, then by the gap
    between their mean ``strength`` inside and outside the class (presence
    itself when omitted), then by (region, column).
    """
    present = np.asarray(present, dtype=bool)
    strength = present.astype(np.float64) if strength is None else np.asarray(strength, np.float64)
    labels = np.asarray(labels)
    K = len(class_names)
    candidates = {}
    for k in range(K):
        mask = labels == k
        freq = present[mask].mean(axis=0) if mask.any() else np.zeros(len(keys))
        inside = strength[mask].mean(axis=0) if mask.any() else np.zeros(len(keys))
        outside = strength[~mask].mean(axis=0) if (~mask).any() else np.zeros(len(keys))
        order = np.lexsort((np.arange(len(keys)), outside - inside, -freq))
        candidates[k] = [RankedAttribute(*keys[i], float(freq[i]))
                         for i in order[:top_m] if freq[i] > 0]

    selected_by: dict = {}
    for k in range(K):
        for r in candidates[k]:
            selected_by[(r.region, r.column)] = selected_by.get((r.region, r.column), 0) + 1
    excluded = sorted(key for key, n in selected_by.items() if n > exclusion_threshold)
    ranked = {k: [r for r in candidates[k] if (r.region, r.column) not in excluded]
              for k in range(K)}
    return AttributeReport(tuple(class_names), ranked, excluded, selected_by)


def describe(model: AttrModel, data: Dataset, top_m: int = 8, exclusion_threshold: int = 4,
             regions=(1, 2, 4, 5)) -> AttributeReport:
    """Rank each class's most frequently present attributes over ``regions``.

    Only attributes present in at least one specimen of the class can be
    selected.  Equal frequencies are ordered by how much more strongly the
    attribute responds inside the class than outside it (real values per unit
    column norm, firing fractions when binarized).  Attributes selected by
    more than ``exclusion_threshold`` classes are dropped.
    """
    if model is None or not model.bases or not model.svms:
        raise ValueError("describe needs a trained attribute model")
    if data.d != model.d:
        raise ValueError(f"dataset has d={data.d}, model expects d={model.d}")
    regions = tuple(sorted(set(int(j) for j in regions)))
    if not regions or any(not 0 <= j < model.J for j in regions):
        raise ValueError(f"regions must be a non-empty subset of 0..{model.J - 1}")
    if top_m < 1:
        raise ValueError("top_m must be >= 1")

    feats = featurize(data, model.lift)
    b = model.b
    keys = [(j, c) for j in regions for c in range(b)]
    cols = [j * b + c for j, c in keys]
    Z = descriptors(feats, model.bases, model.mode)
    present = presence(model, feats, Z)
    strength = Z
    if model.mode != BINARIZED:
        norms = np.concatenate([np.linalg.norm(A, axis=0) for A in model.bases])
        strength = Z / np.where(norms > 0, norms, 1.0)
    report = rank_attributes(present[:, cols], feats.labels, tuple(data.class_names), keys,
                             top_m, exclusion_threshold, strength[:, cols])
    survivors = sorted({(r.region, r.column) for rs in report.ranked.values() for r in rs})
    by_region: dict = {}
    for j, c in survivors:
        by_region.setdefault(j, []).append(c)
    for j, columns in by_region.items():
        X = np.concatenate([bag[j] for bag in feats.bags])
        if len(X) == 0:
            continue
        ids = _cell_ids(data, j)
        H = X @ model.bases[j][:, columns]
        for n, c in enumerate(columns):
            h = H[:, n]
            # ties broken by cell order
            pos = np.argsort(-h, kind="stable")[:N_EXEMPLARS]
            neg = np.argsort(h, kind="stable")[:N_EXEMPLARS]
            report.positive[(j, c)] = [ids[i] for i in pos]
            report.negative[(j, c)] = [ids[i] for i in neg]
    return report
