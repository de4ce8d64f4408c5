import numpy as np
import pytest

from cellattr.dataset import make_folds
from cellattr.experiments import (EvalReport, EvalRow, ExperimentConfig, check_report, run_eval,
                                  sweep_code_length)
from cellattr.featmap import featurize
from cellattr.synth import SynthConfig, generate


def oracle(train, bits, cfg, seed, cache):
    return lambda test: test.labels


def constant(train, bits, cfg, seed, cache):
    return lambda test: np.zeros(len(test.ids), dtype=int)


def _test_counts(feats, plan):
    lookup = dict(zip(feats.ids, feats.labels))
    counts = np.zeros(feats.n_classes, dtype=int)
    for _, test in plan:
        for sid in test:
            counts[lookup[sid]] += 1
    return counts


def test_oracle_predictor_scores_perfectly(small_synth):
    _, ds = small_synth
    feats = featurize(ds)
    plan = make_folds(ds, 3, 20, seed=1)
    rep = run_eval(feats, plan, oracle)
    assert rep.mean_accuracy("oracle", 0) == 1.0
    C = rep.confusion[("oracle", 0)]
    assert np.array_equal(C, np.diag(np.diag(C)))
    check_report(rep, _test_counts(feats, plan))


def test_constant_predictor_accounting(small_synth):
    _, ds = small_synth
    feats = featurize(ds)
    plan = make_folds(ds, 4, 21, seed=2)
    rep = run_eval(feats, plan, constant)
    C = rep.confusion[("constant", 0)]
    assert np.all(C[:, 1:] == 0)
    counts = _test_counts(feats, plan)
    np.testing.assert_array_equal(C.sum(axis=1), counts)
    assert rep.mean_accuracy("constant", 0) == pytest.approx(counts[0] / counts.sum(), abs=1e-12)
    check_report(rep, counts)


def test_check_report_catches_inconsistency():
    rep = EvalReport(("a", "b"), rows=[EvalRow("m", 0, 0, 1.0, 0, 0)],
                     confusion={("m", 0): np.array([[1, 1], [0, 2]])})
    with pytest.raises(ValueError, match="trace"):
        check_report(rep)
    rep.confusion[("m", 0)] = np.array([[2, 0], [0, 2]])
    check_report(rep)
    with pytest.raises(ValueError, match="row sums"):
        check_report(rep, [3, 1])
    rep.confusion[("m", 0)] = np.array([[-1, 0], [0, 2]])
    with pytest.raises(ValueError, match="malformed"):
        check_report(rep)


def test_same_seed_identical_files(small_synth, tmp_path):
    _, ds = small_synth
    plan = make_folds(ds, 2, 20, seed=0)
    cfg = ExperimentConfig(timing=False, outer_iters=2)
    for name in ("a", "b"):
        sweep_code_length(ds, plan, ["arcad", "lsh", "mes"], [6, 12], cfg, seed=3).write(tmp_path / name)
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "results.csv" in files and "confusion_arcad_12.csv" in files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert ",0.000,0.000" in (tmp_path / "a" / "results.csv").read_text()


def test_sweep_rows_are_cartesian(small_synth):
    _, ds = small_synth
    plan = make_folds(ds, 2, 40, seed=0)
    rep = sweep_code_length(ds, plan, ["lsh", "sph", "baseline-dominant"], [6, 12],
                            ExperimentConfig(timing=False))
    keys = {(r.method, r.bits, r.fold) for r in rep.rows}
    expected = {(m, b, f) for m in ("lsh", "sph") for b in (6, 12) for f in range(2)}
    expected |= {("baseline-dominant", 0, f) for f in range(2)}
    assert keys == expected and len(rep.rows) == len(expected)
    check_report(rep)


def test_bits_must_split_over_regions(small_synth):
    _, ds = small_synth
    plan = make_folds(ds, 1, 10)
    with pytest.raises(ValueError, match="divisible"):
        sweep_code_length(ds, plan, ["arcad"], [6, 10])
    with pytest.raises(ValueError, match="divisible"):
        run_eval(ds, plan, "crad", 8)
    # hashing methods have no region constraint
    run_eval(ds, plan, "lsh", 8)


def test_unknown_method(small_synth):
    _, ds = small_synth
    with pytest.raises(ValueError, match="unknown method"):
        run_eval(ds, make_folds(ds, 1, 10), "nope", 6)


def test_longer_lsh_codes_do_not_hurt():
    ds = generate(SynthConfig())
    plan = make_folds(ds, 5, 160, seed=7)
    rep = sweep_code_length(ds, plan, ["lsh"], [6, 96], ExperimentConfig(timing=False))
    assert rep.mean_accuracy("lsh", 96) >= rep.mean_accuracy("lsh", 6)
