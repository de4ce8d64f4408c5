"""Binary-code baselines on specimen-level features: LSH, KLSH, spectral hashing, ITQ.

Codes are uint8 arrays of 0/1 with one row per specimen.  ``hash_classify``
turns codes into +-1 vectors and trains the same one-vs-all linear SVM used
for the learned descriptors.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .featmap import intersection_kernel
from .linsvm import ova_predict, ova_train

LSH = "lsh"
KLSH = "klsh"
SPH = "sph"
ITQ = "itq"


@dataclass
class HashModel:
    method: str
    code_length: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.code_length < 1:
            raise ValueError("code_length must be >= 1")

    def encode(self, X) -> np.ndarray:
        return ENCODERS[self.method](self, X)


def _bits(values) -> np.ndarray:
    return (np.asarray(values) >= 0).astype(np.uint8)


# -- LSH -------------------------------------------------------------------

def lsh_train(dim: int, code_length: int, seed: int = 0) -> HashModel:
    if dim < 1:
        raise ValueError("dim must be >= 1")
    R = np.random.default_rng(seed).standard_normal((dim, code_length))
    return HashModel(LSH, code_length, {"R": R})


def lsh_encode(model: HashModel, X) -> np.ndarray:
    return _bits(np.atleast_2d(np.asarray(X, dtype=np.float64)) @ model.params["R"])


# -- KLSH ------------------------------------------------------------------

def klsh_train(X, code_length: int, n_anchors: int | None = None, subset: int | None = None,
               seed: int = 0, kernel=intersection_kernel, ridge: float = 1e-8) -> HashModel:
    """Kernelized LSH over ``n_anchors`` training points.

    Each bit draws ``subset`` anchors S and uses weights
    K^{-1/2} (e_S / |S| - e / m) on the centred anchor kernel; the bit is
    [sum_i w_i k(x, x_i) >= sum_i w_i mean_j k(x_j, x_i)].
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    rng = np.random.default_rng(seed)
    m = min(300, len(X)) if n_anchors is None else n_anchors
    if not 1 <= m <= len(X):
        raise ValueError("anchor count must be between 1 and the number of training points")
    anchors = X[np.sort(rng.choice(len(X), size=m, replace=False))]
    K = kernel(anchors, anchors)
    H = np.eye(m) - 1.0 / m
    Kc = H @ K @ H
    evals, evecs = np.linalg.eigh(Kc + ridge * np.eye(m))
    keep = evals > ridge * 10
    inv_sqrt = (evecs[:, keep] / np.sqrt(evals[keep])) @ evecs[:, keep].T
    t = subset if subset is not None else max(1, min(30, m // 4))
    W = np.zeros((m, code_length))
    if not keep.any():
        # a single anchor (or identical anchors) has no centred spread to whiten:
        # every bit compares the raw kernel value with its training mean
        W[:] = 1.0 / m
        return HashModel(KLSH, code_length, {"anchors": anchors, "W": W,
                                             "thresholds": K.mean(axis=0) @ W, "kernel": kernel})
    for bit in range(code_length):
        e = np.zeros(m)
        e[rng.choice(m, size=t, replace=False)] = 1.0 / t
        W[:, bit] = inv_sqrt @ (e - 1.0 / m)
    thresholds = K.mean(axis=0) @ W
    return HashModel(KLSH, code_length, {"anchors": anchors, "W": W, "thresholds": thresholds,
                                         "kernel": kernel})


def klsh_encode(model: HashModel, X, kernel_values=None) -> np.ndarray:
    """Encode ``X``; ``kernel_values`` may supply precomputed k(X, anchors)."""
    p = model.params
    if kernel_values is None:
        kernel_values = p.get("kernel", intersection_kernel)(np.atleast_2d(X), p["anchors"])
    return _bits(np.asarray(kernel_values) @ p["W"] - p["thresholds"])


# -- spectral hashing ------------------------------------------------------

def sph_train(X, code_length: int) -> HashModel:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if len(X) <= code_length:
        raise ValueError("spectral hashing needs more training points than bits")
    mean = X.mean(axis=0)
    Xc = X - mean
    _, svals, Vt = np.linalg.svd(Xc, full_matrices=False)
    rank = int(np.sum(svals > svals[0] * 1e-10)) if len(svals) and svals[0] > 0 else 0
    npca = min(code_length, rank)
    if npca < code_length:
        warnings.warn(f"data rank {rank} < {code_length} bits; using {npca} principal directions")
    npca = max(npca, 1)
    pc = Vt[:npca].T
    Y = Xc @ pc
    eps = np.finfo(float).eps
    mn = Y.min(axis=0) - eps
    mx = Y.max(axis=0) + eps
    R = mx - mn
    max_mode = np.ceil((code_length + 1) * R / R.max()).astype(np.int64)
    n_modes = int(max_mode.sum() - len(max_mode) + 1)
    modes = np.ones((n_modes, npca))
    m = 0
    for i in range(npca):
        modes[m + 1:m + max_mode[i], i] = np.arange(2, max_mode[i] + 1)
        m += max_mode[i] - 1
    modes -= 1
    omegas = modes * (np.pi / R)[None, :]
    eigvals = np.sum(omegas ** 2, axis=1)
    order = np.argsort(eigvals, kind="stable")
    # skip the constant mode
    modes = modes[order[1:code_length + 1]]
    return HashModel(SPH, code_length, {"mean": mean, "pc": pc, "mn": mn, "R": R,
                                        "modes": modes})


def sph_encode(model: HashModel, X) -> np.ndarray:
    p = model.params
    Y = (np.atleast_2d(np.asarray(X, dtype=np.float64)) - p["mean"]) @ p["pc"]
    omega = p["modes"] * (np.pi / p["R"])[None, :]
    phase = np.sin((Y - p["mn"])[:, None, :] * omega[None, :, :] + np.pi / 2)
    # modes are one-dimensional: dimensions with zero frequency contribute sin(pi/2) = 1
    return (np.prod(phase, axis=2) > 0).astype(np.uint8)


# -- ITQ -------------------------------------------------------------------

def _signs(V):
    return np.where(V >= 0, 1.0, -1.0)


def quantization_loss(V, R) -> float:
    VR = V @ R
    return float(np.sum((_signs(VR) - VR) ** 2))


def itq_train(X, code_length: int, iters: int = 50, seed: int = 0) -> HashModel:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    mean = X.mean(axis=0)
    Xc = X - mean
    _, svals, Vt = np.linalg.svd(Xc, full_matrices=False)
    rank = int(np.sum(svals > svals[0] * 1e-10)) if len(svals) and svals[0] > 0 else 0
    if code_length > rank:
        raise ValueError(f"code_length {code_length} exceeds feature rank {rank}")
    pc = Vt[:code_length].T
    V = Xc @ pc
    rng = np.random.default_rng(seed)
    R, _ = np.linalg.qr(rng.standard_normal((code_length, code_length)))
    losses = [quantization_loss(V, R)]
    ortho = [float(np.max(np.abs(R.T @ R - np.eye(code_length))))]
    for _ in range(iters):
        B = _signs(V @ R)
        U, _, Wt = np.linalg.svd(V.T @ B)
        R = U @ Wt
        losses.append(quantization_loss(V, R))
        ortho.append(float(np.max(np.abs(R.T @ R - np.eye(code_length)))))
    return HashModel(ITQ, code_length, {"mean": mean, "pc": pc, "R": R, "losses": losses,
                                        "ortho_error": ortho})


def itq_encode(model: HashModel, X) -> np.ndarray:
    p = model.params
    return _bits((np.atleast_2d(np.asarray(X, dtype=np.float64)) - p["mean"]) @ p["pc"] @ p["R"])


ENCODERS = {LSH: lsh_encode, KLSH: klsh_encode, SPH: sph_encode, ITQ: itq_encode}


# -- classification over codes ---------------------------------------------

@dataclass
class HashClassifier:
    svms: list

    def predict(self, codes) -> np.ndarray:
        return ova_predict(self.svms, to_signed(codes))


def to_signed(codes) -> np.ndarray:
    return 2.0 * np.asarray(codes, dtype=np.float64) - 1.0


def hash_fit(codes, labels, n_classes: int, lam: float = 100.0, seed: int = 0) -> HashClassifier:
    codes = np.atleast_2d(codes)
    if len(codes) == 0:
        raise ValueError("no training codes")
    return HashClassifier(ova_train(to_signed(codes), labels, n_classes, lam=lam, seed=seed))


def hash_classify(train_codes, train_labels, test_code, n_classes: int, lam: float = 100.0,
                  seed: int = 0):
    clf = hash_fit(train_codes, train_labels, n_classes, lam, seed)
    pred = clf.predict(np.atleast_2d(test_code))
    return int(pred[0]) if np.ndim(test_code) == 1 else pred


# -- code files ------------------------------------------------------------

CODE_MAGIC = b"CELLATTR-CODES\n"


def save_codes(path, codes, method: str) -> None:
    """Packed bit rows behind a one-line JSON header (method, bits, rows)."""
    codes = np.atleast_2d(np.asarray(codes, dtype=np.uint8))
    header = json.dumps({"method": method, "bits": int(codes.shape[1]), "rows": int(codes.shape[0])})
    with open(path, "wb") as fh:
        fh.write(CODE_MAGIC)
        fh.write(header.encode() + b"\n")
        fh.write(np.packbits(codes, axis=1).tobytes())


def load_codes(path) -> tuple[np.ndarray, str]:
    with open(path, "rb") as fh:
        if fh.readline() != CODE_MAGIC:
            raise ValueError("not a code file")
        header = json.loads(fh.readline())
        payload = fh.read()
    bits, rows = header["bits"], header["rows"]
    packed = np.frombuffer(payload, dtype=np.uint8).reshape(rows, (bits + 7) // 8)
    return np.unpackbits(packed, axis=1)[:, :bits].copy(), header["method"]
