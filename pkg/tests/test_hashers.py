import numpy as np
import pytest
from hypothesis import given, strategies as st

from cellattr.featmap import intersection_kernel
from cellattr.hashers import (hash_classify, hash_fit, itq_encode, itq_train, klsh_encode,
                              klsh_train, load_codes, lsh_encode, lsh_train, quantization_loss,
                              save_codes, sph_encode, sph_train, to_signed)

from conftest import random_histograms
from oracles import lsh_agreement


def test_lsh_repeatable_and_antisymmetric(rng):
    m = lsh_train(10, 32, seed=3)
    u = rng.normal(size=10)
    assert np.array_equal(lsh_encode(m, u), lsh_encode(m, u))
    assert np.array_equal(lsh_encode(m, -u), 1 - lsh_encode(m, u))


def test_lsh_collision_law_single_angle():
    theta = np.pi / 3
    p = 1 - theta / np.pi
    got = lsh_agreement(theta, trials=4000, seed=1)
    assert abs(got - p) <= 3 * np.sqrt(p * (1 - p) / 4000)


def test_lsh_rejects_empty_dim():
    with pytest.raises(ValueError):
        lsh_train(0, 4)


def test_klsh_single_anchor_monotone(rng):
    X = random_histograms(rng, 1, 8)
    m = klsh_train(X, 3, n_anchors=1)
    queries = random_histograms(rng, 40, 8)
    k = intersection_kernel(queries, X)[:, 0]
    bits = klsh_encode(m, queries)
    assert np.all(bits == bits[:, :1])
    thr = m.params["thresholds"][0] / m.params["W"][0, 0]
    np.testing.assert_array_equal(bits[:, 0], (k >= thr).astype(np.uint8))
    order = np.argsort(k)
    assert np.all(np.diff(bits[order, 0].astype(int)) >= 0)


def test_klsh_identical_and_cached(rng):
    X = random_histograms(rng, 50, 12)
    m = klsh_train(X, 16, n_anchors=20, seed=2)
    Q = random_histograms(rng, 10, 12)
    assert np.array_equal(klsh_encode(m, Q), klsh_encode(m, Q))
    cached = intersection_kernel(Q, m.params["anchors"])
    assert np.array_equal(klsh_encode(m, Q, kernel_values=cached), klsh_encode(m, Q))


def test_klsh_anchor_bounds(rng):
    X = random_histograms(rng, 5, 4)
    with pytest.raises(ValueError):
        klsh_train(X, 2, n_anchors=6)


def test_sph_one_bit_splits_at_midpoint():
    X = np.linspace(0, 1, 101)[:, None]
    m = sph_train(X, 1)
    codes = sph_encode(m, X)[:, 0]
    left, right = codes[X[:, 0] < 0.49], codes[X[:, 0] > 0.51]
    assert len(set(left)) == 1 and len(set(right)) == 1 and left[0] != right[0]


def test_sph_balanced_on_isotropic_data(rng):
    X = rng.normal(size=(2000, 8))
    codes = sph_encode(sph_train(X, 8), X)
    means = codes.mean(axis=0)
    assert np.all((means >= 0.3) & (means <= 0.7))


def test_sph_deterministic_and_rank_warning(rng):
    X = rng.normal(size=(50, 6))
    assert np.array_equal(sph_encode(sph_train(X, 4), X), sph_encode(sph_train(X, 4), X))
    low_rank = np.outer(rng.normal(size=50), rng.normal(size=6))
    with pytest.warns(UserWarning, match="rank"):
        sph_train(low_rank, 4)
    with pytest.raises(ValueError):
        sph_train(X[:4], 4)


def test_itq_zero_iterations_keeps_seeded_rotation(rng):
    X = rng.normal(size=(40, 8))
    a = itq_train(X, 4, iters=0, seed=9)
    b = itq_train(X, 4, iters=0, seed=9)
    assert np.array_equal(a.params["R"], b.params["R"])
    R0, _ = np.linalg.qr(np.random.default_rng(9).standard_normal((4, 4)))
    assert np.array_equal(a.params["R"], R0)


def test_itq_loss_monotone_and_orthogonal(rng):
    X = rng.normal(size=(200, 20)) @ rng.normal(size=(20, 20))
    m = itq_train(X, 8, iters=50, seed=1)
    losses = np.array(m.params["losses"])
    assert np.all(np.diff(losses) <= 1e-9 * losses[:-1])
    assert max(m.params["ortho_error"]) <= 1e-10
    V = (X - m.params["mean"]) @ m.params["pc"]
    assert quantization_loss(V, m.params["R"]) == pytest.approx(losses[-1])
    assert itq_encode(m, X).shape == (200, 8)


def test_itq_rank_check(rng):
    with pytest.raises(ValueError, match="rank"):
        itq_train(rng.normal(size=(3, 10)), 5)


def test_hash_classify_unanimous_code(rng):
    codes = rng.integers(0, 2, size=(30, 16)).astype(np.uint8)
    labels = np.arange(30) % 3
    target = codes[0].copy()
    codes[labels == 0] = target
    assert hash_classify(codes, labels, target, 3) == 0


def test_hash_classify_chance_on_random_labels():
    rng = np.random.default_rng(4)
    train = rng.integers(0, 2, size=(200, 24)).astype(np.uint8)
    test = rng.integers(0, 2, size=(400, 24)).astype(np.uint8)
    clf = hash_fit(train, rng.integers(0, 4, size=200), 4)
    acc = np.mean(clf.predict(test) == rng.integers(0, 4, size=400))
    assert abs(acc - 0.25) <= 3 * np.sqrt(0.25 * 0.75 / 400)


def test_hash_classify_deterministic(rng):
    codes = rng.integers(0, 2, size=(20, 8)).astype(np.uint8)
    labels = np.arange(20) % 2
    a = hash_classify(codes, labels, codes[:5], 2, seed=3)
    b = hash_classify(codes, labels, codes[:5], 2, seed=3)
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        hash_fit(np.zeros((0, 4)), np.zeros(0, dtype=int), 2)


@given(rows=st.integers(1, 20), bits=st.integers(1, 40), seed=st.integers(0, 1000))
def test_code_file_round_trip(tmp_path_factory, rows, bits, seed):
    codes = np.random.default_rng(seed).integers(0, 2, size=(rows, bits)).astype(np.uint8)
    p = tmp_path_factory.mktemp("codes") / "c.bin"
    save_codes(p, codes, "itq")
    back, method = load_codes(p)
    assert method == "itq"
    assert np.array_equal(back, codes)


def test_signed_codes():
    assert np.array_equal(to_signed(np.array([0, 1])), [-1.0, 1.0])
