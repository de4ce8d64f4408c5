import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cellattr.dataset import (INTERPHASE, MITOTIC, Cell, Dataset, DatasetError, SpecimenSample,
                              check_histogram, dumps_dataset, load_dataset, loads_dataset,
                              make_folds, region_cell_type, region_index, save_dataset)

from conftest import random_dataset


def _header(classes=("a", "b"), d=4):
    return json.dumps({"classes": list(classes), "d": d})


def _record(sid="s0", label="a", cells=None):
    if cells is None:
        cells = [{"cell_type": INTERPHASE, "regions": [[0.25] * 4] * 3}] * 2
    return json.dumps({"id": sid, "label": label, "intensity": "weak", "cells": cells})


def test_region_indexing():
    assert region_index(INTERPHASE, 0) == 0
    assert region_index(MITOTIC, 2) == 5
    assert [region_cell_type(j) for j in range(6)] == [INTERPHASE] * 3 + [MITOTIC] * 3


def test_two_interphase_cells_parse(tmp_path):
    # a dataset needs every class populated, so class b gets one specimen too
    p = tmp_path / "d.jsonl"
    p.write_text("\n".join([_header(), _record(), _record("s1", "b")]) + "\n")
    ds = load_dataset(p)
    assert ds.d == 4
    first = ds.samples[0]
    assert first.count(INTERPHASE) == 2 and first.count(MITOTIC) == 0


def test_single_specimen_file_violates_class_coverage():
    with pytest.raises(DatasetError, match="without samples"):
        loads_dataset("\n".join([_header(), _record()]))


def test_two_regions_rejected():
    text = "\n".join([_header(), _record(cells=[{"cell_type": INTERPHASE,
                                                  "regions": [[0.25] * 4] * 2}])])
    with pytest.raises(DatasetError, match="region count != 3"):
        loads_dataset(text)


def test_cell_constructor_region_count():
    with pytest.raises(DatasetError, match="region count != 3"):
        Cell(INTERPHASE, np.full((2, 4), 0.25))


@pytest.mark.parametrize("bad, msg", [
    ([[0.5, 0.5, 0.1, -0.1]] * 3, "negative"),
    ([[0.5, 0.5, 0.5, 0.0]] * 3, "L1"),
])
def test_histogram_validation(bad, msg):
    text = "\n".join([_header(), _record(cells=[{"cell_type": INTERPHASE, "regions": bad}]),
                      _record("s1", "b")])
    with pytest.raises(DatasetError, match=msg):
        loads_dataset(text)


def test_all_zero_histogram_is_degenerate_not_error():
    assert check_histogram(np.zeros(4)) is True
    c = Cell(INTERPHASE, np.array([[0.0] * 4, [0.25] * 4, [0.25] * 4]))
    assert c.degenerate


@pytest.mark.parametrize("text, msg", [
    ("", "line 1"),
    ("not json", "line 1: malformed header"),
])
def test_malformed_header(text, msg):
    with pytest.raises(DatasetError, match=msg):
        loads_dataset(text)


def test_error_reports_line_number():
    text = "\n".join([_header(), _record(), "{broken"])
    with pytest.raises(DatasetError, match="line 3"):
        loads_dataset(text)


def test_unknown_label_and_dimension_mismatch():
    with pytest.raises(DatasetError, match="not in header"):
        loads_dataset("\n".join([_header(), _record(label="zzz")]))
    cells = [{"cell_type": INTERPHASE, "regions": [[0.5, 0.5]] * 3}]
    with pytest.raises(DatasetError, match="dimension"):
        loads_dataset("\n".join([_header(), _record(cells=cells)]))


def test_dataset_invariants(rng):
    ds = random_dataset(rng, 4, 2, 3)
    with pytest.raises(DatasetError, match="duplicate"):
        Dataset(ds.samples + ds.samples[:1], ds.class_names, ds.d)
    with pytest.raises(DatasetError, match="without samples"):
        Dataset(ds.samples, ds.class_names + ("extra",), ds.d)
    with pytest.raises(DatasetError, match="empty cell list"):
        SpecimenSample("e", 0, "weak", ())


def test_round_trip_is_byte_identical(rng, tmp_path):
    ds = random_dataset(rng, 6, 3, 5)
    first = dumps_dataset(ds)
    again = dumps_dataset(loads_dataset(first))
    assert again == first
    p = tmp_path / "x.jsonl"
    save_dataset(loads_dataset(first), p)
    assert p.read_text() == first


def test_fold_sizes_match_protocol():
    ids = [f"i{k}" for k in range(262)]
    plan = make_folds(ids, n_folds=5, subset_size=130, seed=1)
    assert len(plan) == 5
    for train, test in plan:
        assert len(train) == 65 and len(test) == 65


def test_forced_split():
    (train, test), = make_folds(["a", "b"], n_folds=1, subset_size=2, seed=0).folds
    assert {train[0], test[0]} == {"a", "b"}


def test_folds_deterministic_and_errors():
    ids = [str(i) for i in range(20)]
    assert make_folds(ids, 3, 10, seed=4) == make_folds(ids, 3, 10, seed=4)
    with pytest.raises(ValueError, match="population"):
        make_folds(ids, 1, 21)


@given(n=st.integers(2, 60), folds=st.integers(1, 6), seed=st.integers(0, 1000), data=st.data())
def test_fold_invariants(n, folds, seed, data):
    subset = data.draw(st.integers(2, n))
    ids = [f"id{i}" for i in range(n)]
    plan = make_folds(ids, folds, subset, seed)
    for train, test in plan:
        assert not set(train) & set(test)
        assert abs(len(train) - len(test)) <= 1
        assert len(set(train)) == len(train) and len(set(test)) == len(test)
