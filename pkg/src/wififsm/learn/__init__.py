"""Same-device pair classification on the (euclidean, cosine, manhattan) pair feature."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..burstseg import UNKNOWN_DEVICE
from ..errors import (ConfigurationError, ContractViolation, EvaluationError, TrainingError,
                      UnsupportedKindError)
from ..featurize import FeatureScaler, FeatureVector, feature_matrix
from ..similarity import MatchResult, _score, pair_distances
from .forest import RandomForest
from .logistic import LogisticRegression, loss_and_grad

KIND_ALIASES = {"lr": "logistic_regression", "logistic_regression": "logistic_regression",
                "rf": "random_forest", "random_forest": "random_forest",
                "svm": "svm_rbf", "svm_rbf": "svm_rbf"}

DEFAULT_HYPERPARAMETERS = {
    "logistic_regression": {"learning_rate": 0.1, "epochs": 500, "l2": 1e-4},
    "random_forest": {"n_trees": 100, "max_depth": 12, "max_features": "sqrt"},
    "svm_rbf": {"C": 1.0, "gamma": "scale"},
}


@dataclass(frozen=True)
class PairSample:
    f_euclidean: float
    f_cosine: float
    f_manhattan: float
    label: int
    i: str
    j: str
    device_i: str = ""
    device_j: str = ""
    p: int | None = None

    @property
    def features(self) -> tuple[float, float, float]:
        return (self.f_euclidean, self.f_cosine, self.f_manhattan)


def pair_arrays(pairs: Sequence[PairSample]) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([p.features for p in pairs], dtype=float).reshape(-1, 3)
    y = np.array([p.label for p in pairs], dtype=int)
    return X, y


def _negative_pairs(devices: np.ndarray, need: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    n = len(devices)
    total = n * (n - 1) // 2 - sum(c * (c - 1) // 2 for c in np.unique(devices, return_counts=True)[1])
    if need >= total or need * 2 >= total:
        iu, ju = np.triu_indices(n, k=1)
        keep = devices[iu] != devices[ju]
        cand = np.stack([iu[keep], ju[keep]], axis=1)
        if need < len(cand):
            cand = cand[np.sort(rng.choice(len(cand), size=need, replace=False))]
        return [tuple(map(int, c)) for c in cand]
    chosen: set[tuple[int, int]] = set()
    picked = []
    while len(picked) < need:
        a, b = (int(v) for v in rng.integers(0, n, size=2))
        if a == b or devices[a] == devices[b]:
            continue
        key = (min(a, b), max(a, b))
        if key not in chosen:
            chosen.add(key)
            picked.append(key)
    return sorted(picked)


def build_pairs(vectors: Sequence[FeatureVector], policy: str = "balanced", seed: int = 0,
                p: int | None = None) -> list[PairSample]:
    """Labelled fingerprint pairs: every same-device pair, plus different-device pairs
    (an equal-sized seeded sample under ``balanced``, all of them under ``exhaustive``)."""
    if policy not in ("balanced", "exhaustive"):
        raise ConfigurationError(f"unknown pair policy {policy!r}")
    vectors = [v for v in vectors if v.device_id != UNKNOWN_DEVICE]
    if len(vectors) < 2:
        raise ConfigurationError("need at least 2 fingerprints with known devices")
    if not all(v.normalized for v in vectors):
        raise ContractViolation("pair features are computed on normalized vectors")
    devices = np.array([v.device_id for v in vectors], dtype=object)
    iu, ju = np.triu_indices(len(vectors), k=1)
    same = devices[iu] == devices[ju]
    positives = list(zip(iu[same].tolist(), ju[same].tolist()))
    if policy == "exhaustive":
        negatives = list(zip(iu[~same].tolist(), ju[~same].tolist()))
    else:
        negatives = _negative_pairs(devices, len(positives), np.random.default_rng(seed))
    index = np.array(positives + negatives, dtype=np.int64).reshape(-1, 2)
    dist = pair_distances(feature_matrix(vectors), index[:, 0], index[:, 1])
    out = []
    for (a, b), (fe, fc, fm) in zip(index.tolist(), dist.tolist()):
        va, vb = vectors[a], vectors[b]
        out.append(PairSample(fe, fc, fm, int(va.device_id == vb.device_id), va.fingerprint_id,
                              vb.fingerprint_id, va.device_id, vb.device_id, p))
    return out


def split_by_device(vectors: Sequence[FeatureVector], test_fraction: float = 0.2, seed: int = 0):
    """Seeded device-disjoint split; returns (train, test) vector lists."""
    known = sorted({v.device_id for v in vectors if v.device_id != UNKNOWN_DEVICE})
    if len(known) < 2:
        raise ConfigurationError("a device-disjoint split needs at least 2 known devices")
    order = np.random.default_rng(seed).permutation(len(known))
    n_test = min(len(known) - 1, max(1, int(round(test_fraction * len(known)))))
    test_devices = {known[k] for k in order[:n_test]}
    train = [v for v in vectors if v.device_id != UNKNOWN_DEVICE and v.device_id not in test_devices]
    test = [v for v in vectors if v.device_id in test_devices]
    return train, test


@dataclass
class ClassifierModel:
    kind: str
    hyperparameters: dict
    estimator: object
    training_meta: dict = field(default_factory=dict)

    def predict_proba(self, features) -> np.ndarray:
        X = np.asarray(features, dtype=float).reshape(-1, 3)
        if self.kind == "svm_rbf":
            return self.estimator.predict_proba(X)[:, 1]
        return np.clip(self.estimator.predict_proba(X), 0.0, 1.0)

    def to_record(self) -> dict:
        if self.kind == "svm_rbf":
            raise UnsupportedKindError("SVM models are not serialisable")
        return {"kind": self.kind, "hyperparameters": self.hyperparameters,
                "parameters": self.estimator.get_state(), "training_meta": self.training_meta}

    @classmethod
    def from_record(cls, record: dict) -> "ClassifierModel":
        kind = record["kind"]
        hp = record["hyperparameters"]
        if kind == "logistic_regression":
            est = LogisticRegression(**hp).set_state(record["parameters"])
        elif kind == "random_forest":
            est = RandomForest(**hp).set_state(record["parameters"])
        else:
            raise UnsupportedKindError(f"cannot load model of kind {kind!r}")
        return cls(kind, hp, est, dict(record.get("training_meta", {})))


def _resolve_kind(kind: str) -> str:
    try:
        return KIND_ALIASES[kind]
    except KeyError:
        raise UnsupportedKindError(f"unknown classifier kind {kind!r}") from None


def train(kind: str, pairs: Sequence[PairSample], hyperparameters: dict | None = None,
          seed: int = 0, enable_svm: bool = False, split: str = "") -> ClassifierModel:
    kind = _resolve_kind(kind)
    hp = {**DEFAULT_HYPERPARAMETERS[kind], **(hyperparameters or {})}
    X, y = pair_arrays(pairs)
    if len(np.unique(y)) < 2:
        raise TrainingError("training pairs contain a single class")
    if kind == "logistic_regression":
        est = LogisticRegression(**hp).fit(X, y, seed=seed)
    elif kind == "random_forest":
        est = RandomForest(**hp).fit(X, y, seed=seed)
    else:
        if not enable_svm:
            raise UnsupportedKindError("svm_rbf is disabled; pass enable_svm=True (needs scikit-learn)")
        try:
            from sklearn.svm import SVC
        except ImportError:
            raise UnsupportedKindError("svm_rbf needs scikit-learn installed") from None
        est = SVC(kernel="rbf", probability=True, random_state=seed, **hp).fit(X, y)
    train_devices = sorted({d for p in pairs for d in (p.device_i, p.device_j) if d})
    meta = {"seed": seed, "hyperparameters": hp, "split": split,
            "n_pairs": len(pairs), "train_devices": train_devices}
    return ClassifierModel(kind, hp, est, meta)


@dataclass
class ClassifierEvaluation:
    accuracy: float
    tp: int
    fp: int
    tn: int
    fn: int
    per_p: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def _confusion(pred: np.ndarray, y: np.ndarray) -> ClassifierEvaluation:
    tp = int(np.sum((pred == 1) & (y == 1)))
    tn = int(np.sum((pred == 0) & (y == 0)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    return ClassifierEvaluation((tp + tn) / len(y), tp, fp, tn, fn)


def evaluate_classifier(model: ClassifierModel, test_pairs: Sequence[PairSample],
                        threshold: float = 0.5) -> ClassifierEvaluation:
    if not test_pairs:
        raise ConfigurationError("empty test set")
    leaked = set(model.training_meta.get("train_devices", ())) & {
        d for p in test_pairs for d in (p.device_i, p.device_j) if d}
    if leaked:
        raise ContractViolation(f"test pairs share {len(leaked)} device(s) with training data")
    X, y = pair_arrays(test_pairs)
    pred = (model.predict_proba(X) >= threshold).astype(int)
    result = _confusion(pred, y)
    groups = defaultdict(list)
    for k, p in enumerate(test_pairs):
        if p.p is not None:
            groups[p.p].append(k)
    result.per_p = {P: _confusion(pred[idx], y[idx]) for P, idx in sorted(groups.items())}
    return result


EVALUATION_FIELDS = ("P", "model", "accuracy", "tp", "fp", "tn", "fn")


def evaluation_rows(kind: str, result: ClassifierEvaluation, P=None) -> list[dict]:
    """One row for the whole test set, then one per P bucket when pairs carried P."""
    rows = [{"P": "" if P is None else P, "model": kind, "accuracy": repr(result.accuracy),
             "tp": result.tp, "fp": result.fp, "tn": result.tn, "fn": result.fn}]
    for bucket, sub in result.per_p.items():
        if bucket != P:
            rows.append({"P": bucket, "model": kind, "accuracy": repr(sub.accuracy),
                         "tp": sub.tp, "fp": sub.fp, "tn": sub.tn, "fn": sub.fn})
    return rows


def write_evaluation_csv(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=EVALUATION_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def classifier_experiment(vectors: Sequence[FeatureVector], kind: str, seed: int = 0,
                          hyperparameters: dict | None = None, test_fraction: float = 0.2,
                          policy: str = "balanced", enable_svm: bool = False,
                          p: int | None = None) -> tuple[ClassifierModel, ClassifierEvaluation]:
    """Device-disjoint split, scaler fitted on the training side only, train, evaluate."""
    train_v, test_v = split_by_device(vectors, test_fraction, seed)
    scaler = FeatureScaler().fit(train_v)
    train_pairs = build_pairs(scaler.transform(train_v), policy, seed, p)
    test_pairs = build_pairs(scaler.transform(test_v), policy, seed + 1, p)
    split = f"device-disjoint test_fraction={test_fraction} seed={seed}"
    model = train(kind, train_pairs, hyperparameters, seed, enable_svm, split)
    return model, evaluate_classifier(model, test_pairs)


def match_with_model(model: ClassifierModel, vectors: Sequence[FeatureVector]) -> MatchResult:
    """Nearest-neighbour matching that picks, for each fingerprint, the partner with the
    highest same-device probability (ties to the lowest index)."""
    n = len(vectors)
    if n < 2:
        raise ContractViolation("matching needs at least 2 fingerprints")
    X = feature_matrix(vectors)
    predictions = np.empty(n, dtype=np.int64)
    others = np.arange(n)
    for a in range(n):
        feats = pair_distances(X, np.full(n, a), others)
        score = model.predict_proba(feats)
        score[a] = -np.inf
        predictions[a] = int(np.argmax(score))
    return _score(predictions, [v.device_id for v in vectors])


__all__ = ["PairSample", "ClassifierModel", "ClassifierEvaluation", "build_pairs", "train",
           "evaluate_classifier", "split_by_device", "classifier_experiment", "match_with_model",
           "pair_arrays", "loss_and_grad", "evaluation_rows", "write_evaluation_csv", "LogisticRegression", "RandomForest"]
