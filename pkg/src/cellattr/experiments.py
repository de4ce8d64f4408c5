"""Cross-validated evaluation of learned descriptors and all baselines."""
from __future__ import annotations

import csv
import dataclasses
import io
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import attrlearn, baselines, hashers
from .dataset import INTERPHASE, MITOTIC, N_REGIONS, Dataset, FoldPlan
from .featmap import FeatureSet, LiftConfig, featurize

ATTRIBUTE_METHODS = ("arcad", "crad", "arcad-binarized")
HASH_METHODS = ("lsh", "klsh", "sph", "itq")
CELL_METHODS = ("baseline-dominant", "mes", "objectbank-interphase", "objectbank-both")
METHODS = ATTRIBUTE_METHODS + HASH_METHODS + CELL_METHODS


@dataclass
class ExperimentConfig:
    lam: float = 100.0
    basis_lam: float = 1e6
    outer_iters: int = 10
    tol: float = 1e-4
    n: int = 1
    sample_period: float | None = None
    klsh_anchors: int = 300
    itq_iters: int = 50
    cell_lam: float = 1e4
    cell_svm_tol: float = 1e-3
    cell_svm_max_iter: int = 300
    top_m: int = 8
    exclusion_threshold: int = 4
    describe_regions: tuple = (1, 2, 4, 5)
    timing: bool = True

    @property
    def lift(self) -> LiftConfig:
        return LiftConfig(self.n, self.sample_period)

    def attr_config(self, bits: int, seed: int, mode: str) -> attrlearn.AttrConfig:
        if bits % N_REGIONS:
            raise ValueError(f"code length {bits} is not divisible by {N_REGIONS} regions")
        return attrlearn.AttrConfig(bits_per_region=bits // N_REGIONS, lam=self.lam,
                                    basis_lam=self.basis_lam, outer_iters=self.outer_iters,
                                    tol=self.tol, seed=seed, mode=mode)


Predictor = Callable[[FeatureSet], np.ndarray]


def _fit_attr(scheme, mode):
    def fit(train, bits, cfg, seed, cache):
        trainer = attrlearn.train_crad if scheme == "crad" else attrlearn.train_arcad
        model = trainer(train, cfg.attr_config(bits, seed, mode))
        return lambda test: attrlearn.predict_features(model, test)
    return fit


def _fit_hash(method):
    def fit(train, bits, cfg, seed, cache):
        if method == "lsh":
            X = train.u_matrix()
            model = hashers.lsh_train(X.shape[1], bits, seed)
            feat = FeatureSet.u_matrix
        elif method == "klsh":
            X = train.raw.reshape(len(train.ids), -1)
            model = hashers.klsh_train(X, bits, n_anchors=min(cfg.klsh_anchors, len(X)), seed=seed)
            feat = lambda f: f.raw.reshape(len(f.ids), -1)
        elif method == "sph":
            X = train.u_matrix()
            model = hashers.sph_train(X, bits)
            feat = FeatureSet.u_matrix
        else:
            X = train.u_matrix()
            model = hashers.itq_train(X, bits, iters=cfg.itq_iters, seed=seed)
            feat = FeatureSet.u_matrix
        clf = hashers.hash_fit(model.encode(X), train.labels, train.n_classes, cfg.lam, seed)
        return lambda test: clf.predict(model.encode(feat(test)))
    return fit


def _cell_classifiers(train, cfg, seed, cache, types) -> dict:
    out = {}
    for t in types:
        if t not in cache:
            cache[t] = baselines.train_cell_classifier(
                train, t, lam=cfg.cell_lam, seed=seed, tol=cfg.cell_svm_tol,
                max_iter=cfg.cell_svm_max_iter)
        out[t] = cache[t]
    return out


def _fit_cell(method):
    def fit(train, bits, cfg, seed, cache):
        if method in ("baseline-dominant", "mes"):
            clf = _cell_classifiers(train, cfg, seed, cache, [INTERPHASE])[INTERPHASE]
            rule = (baselines.dominant_pattern_classify if method == "baseline-dominant"
                    else baselines.mes_classify)
            return lambda test: np.array([rule(clf, test, i) for i in range(len(test.ids))])
        scope = baselines.BOTH if method == "objectbank-both" else baselines.INTERPHASE_ONLY
        types = [INTERPHASE, MITOTIC] if scope == baselines.BOTH else [INTERPHASE]
        ob = baselines.object_bank_fit(_cell_classifiers(train, cfg, seed, cache, types),
                                       train, scope, lam=cfg.lam, seed=seed)
        return ob.predict
    return fit


FITTERS = {
    "arcad": _fit_attr("arcad", attrlearn.REAL),
    "crad": _fit_attr("crad", attrlearn.REAL),
    "arcad-binarized": _fit_attr("arcad", attrlearn.BINARIZED),
    **{m: _fit_hash(m) for m in HASH_METHODS},
    **{m: _fit_cell(m) for m in CELL_METHODS},
}


def uses_bits(method: str) -> bool:
    return method in ATTRIBUTE_METHODS or method in HASH_METHODS


@dataclass
class EvalRow:
    method: str
    bits: int
    fold: int
    accuracy: float
    train_secs: float
    test_secs: float


@dataclass
class EvalReport:
    class_names: tuple
    rows: list = field(default_factory=list)
    confusion: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def add(self, other: "EvalReport") -> None:
        self.rows.extend(other.rows)
        self.confusion.update(other.confusion)

    def keys(self) -> list:
        seen = []
        for r in self.rows:
            if (r.method, r.bits) not in seen:
                seen.append((r.method, r.bits))
        return seen

    def fold_accuracies(self, method: str, bits: int) -> np.ndarray:
        return np.array([r.accuracy for r in self.rows if r.method == method and r.bits == bits])

    def mean_accuracy(self, method: str, bits: int | None = None) -> float:
        if bits is None:
            bits = next(b for m, b in self.keys() if m == method)
        return float(self.fold_accuracies(method, bits).mean())

    def results_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "bits", "fold", "accuracy", "train_secs", "test_secs"])
        for r in self.rows:
            w.writerow([r.method, r.bits, r.fold, f"{r.accuracy:.6f}",
                        f"{r.train_secs:.3f}", f"{r.test_secs:.3f}"])
        return buf.getvalue()

    def confusion_csv(self, method: str, bits: int) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\pred"] + list(self.class_names))
        for name, row in zip(self.class_names, self.confusion[(method, bits)]):
            w.writerow([name] + [int(v) for v in row])
        return buf.getvalue()

    def summary(self) -> str:
        lines = ["method           bits   mean_acc   std_acc   folds"]
        for m, b in self.keys():
            acc = self.fold_accuracies(m, b)
            lines.append(f"{m:<16} {b:>4}   {acc.mean():.4f}     {acc.std():.4f}    {len(acc)}")
        if self.config:
            lines.append("")
            lines.extend(f"{k} = {v}" for k, v in self.config.items())
        return "\n".join(lines) + "\n"

    def write(self, out_dir, name: str = "results") -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.csv").write_text(self.results_csv())
        (out / "summary.txt").write_text(self.summary())
        for m, b in self.keys():
            (out / f"confusion_{m}_{b}.csv").write_text(self.confusion_csv(m, b))


def check_report(report: EvalReport, test_counts=None) -> None:
    """Confusion-matrix accounting identity.

    Every matrix is non-negative, its grand total equals the number of test
    predictions, and accuracy pooled over folds equals trace / total.  With
    ``test_counts`` (per-class test totals over all folds) the row sums must
    match them too.  Raises ``ValueError`` on the first violation.
    """
    for (method, bits), C in report.confusion.items():
        C = np.asarray(C)
        if C.ndim != 2 or C.shape[0] != C.shape[1] or np.any(C < 0):
            raise ValueError(f"{method}/{bits}: malformed confusion matrix")
        if test_counts is not None and not np.array_equal(C.sum(axis=1), np.asarray(test_counts)):
            raise ValueError(f"{method}/{bits}: row sums differ from per-class test counts")
        if C.sum() == 0:
            continue
        rows = [r for r in report.rows if r.method == method and r.bits == bits]
        if test_counts is not None:
            total = int(np.sum(test_counts))
            n_test = total // len(rows) if rows else 0
            if any(abs(r.accuracy * n_test - round(r.accuracy * n_test)) > 1e-6 for r in rows):
                raise ValueError(f"{method}/{bits}: fold accuracy is not a count ratio")
        pooled = np.trace(C) / C.sum()
        per_fold = np.mean([r.accuracy for r in rows]) if rows else pooled
        # folds share one test size in a fold plan, so the mean of fold
        # accuracies equals the pooled ratio
        if not np.isclose(per_fold, pooled, rtol=0, atol=1e-9):
            raise ValueError(f"{method}/{bits}: accuracy {per_fold} != trace/total {pooled}")


def _as_features(data, cfg: ExperimentConfig) -> FeatureSet:
    return featurize(data, cfg.lift) if isinstance(data, Dataset) else data


class _Clock:
    def __init__(self, enabled: bool):
        self.enabled = enabled

    def __call__(self) -> float:
        return time.perf_counter() if self.enabled else 0.0


def run_eval(data, plan: FoldPlan, method, bits: int = 0,
             config: ExperimentConfig | None = None, seed: int = 0,
             caches: list | None = None) -> EvalReport:
    """Train on each fold's first half, test on its second half.

    ``method`` is a registered name or a callable with the fitter signature
    ``fit(train, bits, config, seed, cache) -> predict(test) -> labels``.
    """
    cfg = config or ExperimentConfig()
    feats = _as_features(data, cfg)
    if callable(method):
        fit, name = method, getattr(method, "__name__", "custom")
    elif method in FITTERS:
        fit, name = FITTERS[method], method
    else:
        raise ValueError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    if not uses_bits(name):
        bits = 0
    elif name in ATTRIBUTE_METHODS and bits % N_REGIONS:
        raise ValueError(f"code length {bits} is not divisible by {N_REGIONS} regions")
    lookup = {sid: i for i, sid in enumerate(feats.ids)}
    K = feats.n_classes
    clock = _Clock(cfg.timing)
    report = EvalReport(tuple(feats.class_names), config=_config_echo(cfg, seed))
    confusion = np.zeros((K, K), dtype=np.int64)
    for f, (train_ids, test_ids) in enumerate(plan):
        train = feats.subset([lookup[s] for s in train_ids])
        test = feats.subset([lookup[s] for s in test_ids])
        cache = caches[f] if caches is not None else {}
        t0 = clock()
        predictor = fit(train, bits, cfg, seed, cache)
        t1 = clock()
        pred = np.asarray(predictor(test), dtype=np.int64)
        t2 = clock()
        C = np.zeros((K, K), dtype=np.int64)
        np.add.at(C, (test.labels, pred), 1)
        confusion += C
        report.rows.append(EvalRow(name, bits, f, float(np.trace(C) / C.sum()), t1 - t0, t2 - t1))
    report.confusion[(name, bits)] = confusion
    return report


def sweep_code_length(data, plan: FoldPlan, methods, lengths, config: ExperimentConfig | None = None,
                      seed: int = 0) -> EvalReport:
    cfg = config or ExperimentConfig()
    feats = _as_features(data, cfg)
    for m in methods:
        if m in ATTRIBUTE_METHODS:
            bad = [p for p in lengths if p % N_REGIONS]
            if bad:
                raise ValueError(f"{m}: code lengths {bad} are not divisible by {N_REGIONS}")
    caches = [{} for _ in range(len(plan))]
    report = EvalReport(tuple(feats.class_names), config=_config_echo(cfg, seed))
    for m in methods:
        for p in (lengths if uses_bits(m) else [0]):
            report.add(run_eval(feats, plan, m, p, cfg, seed, caches))
    return report


def _config_echo(cfg: ExperimentConfig, seed: int) -> dict:
    echo = dataclasses.asdict(cfg)
    echo["seed"] = seed
    return echo
