"""Specimen datasets: bags of cells with per-region histograms.

A specimen holds a list of cells; each cell is either interphase or mitotic and
carries three raw bag-of-words histograms (whole, inner, outer).  Regions are
indexed 0..5 throughout the package::

    0 interphase/whole   1 interphase/inner   2 interphase/outer
    3 mitotic/whole      4 mitotic/inner      5 mitotic/outer
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

INTERPHASE = "interphase"
MITOTIC = "mitotic"
CELL_TYPES = (INTERPHASE, MITOTIC)
INTENSITIES = ("weak", "strong")
REGION_PARTS = ("whole", "inner", "outer")
N_REGIONS = 6
REGION_NAMES = tuple(f"{t}/{p}" for t in CELL_TYPES for p in REGION_PARTS)

L1_TOL = 1e-9


class DatasetError(ValueError):
    """Raised for malformed dataset files or invariant violations."""


def region_index(cell_type: str, part: int) -> int:
    return CELL_TYPES.index(cell_type) * 3 + part


def region_cell_type(j: int) -> str:
    return CELL_TYPES[j // 3]


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def storage_rounding(h: np.ndarray) -> float:
    """Worst-case L1 drift from writing ``h`` with 9 significant digits."""
    v = np.abs(h[h != 0])
    if v.size == 0:
        return 0.0
    return float(np.sum(0.5 * 10.0 ** (np.floor(np.log10(v)) - 8)))


def check_histogram(h: np.ndarray, stored: bool = False) -> bool:
    """Validate one raw histogram; returns True when it is all-zero (degenerate).

    ``stored`` histograms were read from a file and may additionally carry the
    rounding of the 9-digit format.
    """
    if not np.all(np.isfinite(h)):
        raise DatasetError("histogram has non-finite entries")
    if np.any(h < 0):
        raise DatasetError("histogram has negative entries")
    total = float(h.sum())
    if total == 0.0:
        return True
    tol = L1_TOL + (storage_rounding(h) if stored else 0.0)
    if abs(total - 1.0) > tol:
        raise DatasetError(f"histogram L1 norm {total!r} != 1")
    return False


@dataclass(frozen=True)
class Cell:
    cell_type: str
    regions: np.ndarray  # (3, d), rows ordered whole/inner/outer

    def __post_init__(self):
        if self.cell_type not in CELL_TYPES:
            raise DatasetError(f"unknown cell_type {self.cell_type!r}")
        regions = np.asarray(self.regions, dtype=np.float64)
        if regions.ndim != 2 or regions.shape[0] != 3:
            n = regions.shape[0] if regions.ndim >= 1 else 0
            raise DatasetError(f"region count != 3 (got {n})")
        object.__setattr__(self, "regions", _frozen(regions))

    @property
    def d(self) -> int:
        return self.regions.shape[1]

    @property
    def degenerate(self) -> bool:
        return bool(np.any(self.regions.sum(axis=1) == 0))


@dataclass(frozen=True)
class SpecimenSample:
    id: str
    label: int
    intensity: str
    cells: tuple[Cell, ...]

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))
        if not self.cells:
            raise DatasetError(f"specimen {self.id!r} has an empty cell list")
        if self.intensity not in INTENSITIES:
            raise DatasetError(f"unknown intensity {self.intensity!r}")
        if self.label < 0:
            raise DatasetError("label must be nonnegative")

    def cells_of(self, cell_type: str) -> list[Cell]:
        return [c for c in self.cells if c.cell_type == cell_type]

    def count(self, cell_type: str) -> int:
        return sum(c.cell_type == cell_type for c in self.cells)


@dataclass(frozen=True)
class Dataset:
    samples: tuple[SpecimenSample, ...]
    class_names: tuple[str, ...]
    d: int

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        K = len(self.class_names)
        if K < 2:
            raise DatasetError("need at least 2 classes")
        seen = set()
        for s in self.samples:
            if s.label >= K:
                raise DatasetError(f"specimen {s.id!r}: label {s.label} >= K={K}")
            if s.id in seen:
                raise DatasetError(f"duplicate specimen id {s.id!r}")
            seen.add(s.id)
            for c in s.cells:
                if c.d != self.d:
                    raise DatasetError(
                        f"specimen {s.id!r}: dimension mismatch ({c.d} != {self.d})")
        missing = set(range(K)) - {s.label for s in self.samples}
        if missing:
            names = [self.class_names[k] for k in sorted(missing)]
            raise DatasetError(f"classes without samples: {names}")

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.samples)

    def index_of(self, ids: Iterable[str]) -> np.ndarray:
        lookup = {s.id: i for i, s in enumerate(self.samples)}
        return np.array([lookup[i] for i in ids], dtype=np.int64)


# -- serialization ---------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".9g")


def _fmt_row(row: np.ndarray) -> str:
    return "[" + ",".join(_fmt(v) for v in row) + "]"


def quantize(a) -> np.ndarray:
    """Round values to what the file format stores (9 significant digits)."""
    a = np.asarray(a, dtype=np.float64)
    return np.vectorize(lambda v: float(_fmt(v)), otypes=[np.float64])(a) if a.size else a


def dumps_dataset(ds: Dataset) -> str:
    lines = [json.dumps({"classes": list(ds.class_names), "d": ds.d})]
    for s in ds.samples:
        cells = ",".join(
            '{"cell_type":%s,"regions":[%s]}'
            % (json.dumps(c.cell_type), ",".join(_fmt_row(r) for r in c.regions))
            for c in s.cells)
        lines.append('{"id":%s,"label":%s,"intensity":%s,"cells":[%s]}' % (
            json.dumps(s.id), json.dumps(ds.class_names[s.label]),
            json.dumps(s.intensity), cells))
    return "\n".join(lines) + "\n"


def save_dataset(ds: Dataset, path) -> None:
    Path(path).write_text(dumps_dataset(ds), encoding="utf-8")


def _parse_record(obj, classes: dict, d: int | None, lineno: int) -> SpecimenSample:
    try:
        sid = obj["id"]
        label = obj["label"]
        intensity = obj["intensity"]
        raw_cells = obj["cells"]
    except (KeyError, TypeError) as e:
        raise DatasetError(f"line {lineno}: missing field {e}") from None
    if not isinstance(sid, str):
        raise DatasetError(f"line {lineno}: id must be a string")
    if label not in classes:
        raise DatasetError(f"line {lineno}: label {label!r} not in header classes")
    if not isinstance(raw_cells, list) or not raw_cells:
        raise DatasetError(f"line {lineno}: empty cell list")
    cells = []
    for c in raw_cells:
        regions = c.get("regions") if isinstance(c, dict) else None
        if not isinstance(regions, list):
            raise DatasetError(f"line {lineno}: cell without regions")
        if len(regions) != 3:
            raise DatasetError(f"line {lineno}: region count != 3 (got {len(regions)})")
        try:
            arr = np.array(regions, dtype=np.float64)
        except (TypeError, ValueError):
            raise DatasetError(f"line {lineno}: ragged or non-numeric regions") from None
        if arr.ndim != 2 or (d is not None and arr.shape[1] != d):
            raise DatasetError(f"line {lineno}: dimension mismatch (expected d={d})")
        try:
            for h in arr:
                check_histogram(h, stored=True)
            cells.append(Cell(c.get("cell_type"), arr))
        except DatasetError as e:
            raise DatasetError(f"line {lineno}: {e}") from None
    try:
        return SpecimenSample(sid, classes[label], intensity, tuple(cells))
    except DatasetError as e:
        raise DatasetError(f"line {lineno}: {e}") from None


def loads_dataset(text: str) -> Dataset:
    lines = text.splitlines()
    if not lines:
        raise DatasetError("line 1: missing header")
    try:
        header = json.loads(lines[0])
        class_names = [str(c) for c in header["classes"]]
        d = int(header["d"])
    except (ValueError, KeyError, TypeError):
        raise DatasetError("line 1: malformed header") from None
    classes = {name: k for k, name in enumerate(class_names)}
    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except ValueError:
            raise DatasetError(f"line {lineno}: malformed record") from None
        samples.append(_parse_record(obj, classes, d, lineno))
    return Dataset(tuple(samples), tuple(class_names), d)


def load_dataset(path) -> Dataset:
    return loads_dataset(Path(path).read_text(encoding="utf-8"))


# -- folds -----------------------------------------------------------------

@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...]
    seed: int = 0

    def __len__(self) -> int:
        return len(self.folds)

    def __iter__(self):
        return iter(self.folds)


def make_folds(ids: Sequence[str] | Dataset, n_folds: int = 5,
               subset_size: int | None = None, seed: int = 0) -> FoldPlan:
    """Draw ``n_folds`` random subsets of the pool and split each in half.

    The train half gets the extra element when ``subset_size`` is odd.
    """
    if isinstance(ids, Dataset):
        ids = ids.ids
    ids = list(ids)
    if n_folds < 1:
        raise ValueError("n_folds must be >= 1")
    if subset_size is None:
        subset_size = len(ids)
    if subset_size > len(ids):
        raise ValueError(f"subset_size {subset_size} > population {len(ids)}")
    if subset_size < 2:
        raise ValueError("subset_size must be >= 2")
    rng = np.random.default_rng(seed)
    folds = []
    n_train = (subset_size + 1) // 2
    for _ in range(n_folds):
        pick = rng.choice(len(ids), size=subset_size, replace=False)
        chosen = [ids[i] for i in pick]
        folds.append((tuple(chosen[:n_train]), tuple(chosen[n_train:])))
    return FoldPlan(tuple(folds), seed)
