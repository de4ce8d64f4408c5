import numpy as np
import pytest
from hypothesis import given, strategies as st

from cellattr.attrlearn import BINARIZED, REAL, AttrConfig, AttrModel, train_arcad
from cellattr.describe import N_EXEMPLARS, describe, presence, rank_attributes
from cellattr.featmap import LiftConfig, featurize
from cellattr.linsvm import LinearModel

NAMES = tuple(f"c{k}" for k in range(8))


def _one_attribute(selecting_classes, n_per_class=3):
    """Presence of a single attribute that is on in exactly the given classes."""
    labels = np.repeat(np.arange(8), n_per_class)
    present = np.zeros((len(labels), 1), dtype=bool)
    for k in selecting_classes:
        present[labels == k, 0] = True
    return present, labels


def test_selected_by_five_classes_is_excluded():
    present, labels = _one_attribute(range(5))
    rep = rank_attributes(present, labels, NAMES, [(1, 0)], top_m=1, exclusion_threshold=4)
    assert rep.selected_by[(1, 0)] == 5
    assert rep.excluded == [(1, 0)]
    assert all(not rs for rs in rep.ranked.values())


def test_selected_by_four_classes_is_kept():
    present, labels = _one_attribute(range(4))
    rep = rank_attributes(present, labels, NAMES, [(1, 0)], top_m=1, exclusion_threshold=4)
    assert rep.excluded == []
    assert [r.column for r in rep.ranked[0]] == [0]
    assert rep.ranked[7] == []


def test_ties_prefer_specific_then_index():
    labels = np.array([0, 0, 1, 1])
    present = np.array([[1, 1, 1], [1, 1, 1], [1, 0, 0], [1, 0, 0]], dtype=bool)
    keys = [(1, 0), (1, 1), (2, 0)]
    rep = rank_attributes(present, labels, ("a", "b"), keys, top_m=3, exclusion_threshold=4)
    assert [(r.region, r.column) for r in rep.ranked[0]] == [(1, 1), (2, 0), (1, 0)]


def test_ties_broken_by_response_gap():
    labels = np.array([0, 0, 1, 1])
    present = np.ones((4, 3), dtype=bool)
    strength = np.array([[1.0, 5.0, 2.0], [1.0, 5.0, 2.0], [0.5, 4.5, 0.0], [0.5, 4.5, 0.0]])
    rep = rank_attributes(present, labels, ("a", "b"), [(1, 0), (1, 1), (2, 0)], top_m=3,
                          strength=strength)
    # gaps for class a: 0.5, 0.5, 2.0
    assert [(r.region, r.column) for r in rep.ranked[0]] == [(2, 0), (1, 0), (1, 1)]
    assert [(r.region, r.column) for r in rep.ranked[1]] == [(1, 0), (1, 1), (2, 0)]


@given(seed=st.integers(0, 10_000), top_m=st.integers(1, 6), thr=st.integers(1, 8))
def test_report_invariants(seed, top_m, thr):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 8, size=40)
    labels[:8] = np.arange(8)
    present = rng.uniform(size=(40, 12)) < 0.4
    keys = [(j, c) for j in (1, 2) for c in range(6)]
    rep = rank_attributes(present, labels, NAMES, keys, top_m, thr)
    for k, rs in rep.ranked.items():
        assert len(rs) <= top_m
        freqs = [r.frequency for r in rs]
        assert all(0 < f <= 1 for f in freqs)
        assert freqs == sorted(freqs, reverse=True)
    for key in rep.excluded:
        assert rep.selected_by[key] > thr


def _model(bases, mode=REAL, K=2):
    P = len(bases) * bases[0].shape[1]
    return AttrModel(bases, [LinearModel.zeros(P) for _ in range(K)], mode, "arcad", 100.0,
                     LiftConfig(), bases[0].shape[0] // 3)


def test_binarized_presence_is_majority(small_synth):
    _, ds = small_synth
    feats = featurize(ds)
    rng = np.random.default_rng(0)
    bases = [rng.normal(size=(feats.D, 3)) for _ in range(6)]
    present = presence(_model(bases, BINARIZED), feats)
    for i in range(len(ds)):
        for j in range(6):
            X = feats.bags[i][j]
            if len(X) == 0:
                continue
            fires = (X @ bases[j] > 0).sum(axis=0)
            np.testing.assert_array_equal(present[i, j * 3:(j + 1) * 3], fires > len(X) / 2)


def test_exemplars_are_extreme_cells(small_synth):
    _, ds = small_synth
    model = train_arcad(ds, AttrConfig(bits_per_region=2, outer_iters=2))
    rep = describe(model, ds, top_m=2, exclusion_threshold=4, regions=(1, 4))
    feats = featurize(ds)
    assert rep.positive
    for (j, c), ids in rep.positive.items():
        assert len(ids) == N_EXEMPLARS
        scores = {}
        for s, bag in zip(ds.samples, feats.bags):
            idx = [n for n, cell in enumerate(s.cells) if cell.cell_type == ("interphase" if j < 3 else "mitotic")]
            for n, x in zip(idx, bag[j]):
                scores[f"{s.id}#{n}"] = float(x @ model.bases[j][:, c])
        ranked = sorted(scores.values(), reverse=True)
        assert sorted((scores[i] for i in ids), reverse=True) == ranked[:N_EXEMPLARS]
        low = sorted(scores.values())[:N_EXEMPLARS]
        assert sorted(scores[i] for i in rep.negative[(j, c)]) == low
    text = rep.to_text()
    assert "excluded:" in text
    assert rep.to_csv().startswith("class,rank,region,attribute,frequency")


def test_describe_rejects_bad_inputs(small_synth):
    _, ds = small_synth
    model = _model([np.zeros((3 * ds.d, 2)) for _ in range(6)])
    with pytest.raises(ValueError, match="regions"):
        describe(model, ds, regions=(7,))
    with pytest.raises(ValueError, match="trained"):
        describe(AttrModel([], [], REAL, "arcad", 1.0, LiftConfig(), ds.d), ds)
    with pytest.raises(ValueError, match="top_m"):
        describe(model, ds, top_m=0)


def test_write_outputs(tmp_path):
    present, labels = _one_attribute(range(2))
    rep = rank_attributes(present, labels, NAMES, [(2, 0)], top_m=1)
    rep.write(tmp_path)
    rows = (tmp_path / "attributes.csv").read_text().splitlines()
    assert len(rows) == 3 and rows[1].startswith("c0,0,2,0,1.000000")
    assert "[c7]" in (tmp_path / "attributes.txt").read_text()
