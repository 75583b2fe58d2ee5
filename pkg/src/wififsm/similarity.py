"""Pairwise distance matrices and nearest-neighbour fingerprint matching.

Matrices are computed in row blocks. Columns that hold only 0/1 values (the
IE bitmap) are handled through one matrix product, since for binary vectors
both the Manhattan and the squared Euclidean contribution equal the Hamming
distance ``|a| + |b| - 2 a.b``. The remaining continuous columns are
accumulated one column at a time.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .burstseg import UNKNOWN_DEVICE
from .errors import ContractViolation, EvaluationError, FormatError
from .featurize import FeatureVector, feature_matrix

METRICS = ("euclidean", "manhattan", "cosine")
COMBINED = "combined"
_TAG_CODES = {"euclidean": 1, "manhattan": 2, "cosine": 3, "combined": 4}
MATRIX_MAGIC = b"WFDM"
DEFAULT_BLOCK = 512


@dataclass
class DistanceMatrix:
    values: np.ndarray
    metric: str

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def scaled(self, factor: float) -> "DistanceMatrix":
        return DistanceMatrix(self.values * factor, self.metric)


def _as_vector(x) -> tuple[np.ndarray, bool | None]:
    if isinstance(x, FeatureVector):
        return x.as_array(), x.normalized
    return np.asarray(x, dtype=float), None


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    a, na = _as_vector(x)
    b, nb = _as_vector(y)
    if a.shape != b.shape or a.ndim != 1:
        raise ContractViolation(f"dimension mismatch: {a.shape} vs {b.shape}")
    if na is not None and nb is not None and na != nb:
        raise ContractViolation("cannot compare a normalized vector with a raw one")
    return a, b


def euclidean(x, y) -> float:
    a, b = _pair(x, y)
    return float(np.sqrt(np.sum((a - b) ** 2)))


def manhattan(x, y) -> float:
    a, b = _pair(x, y)
    return float(np.sum(np.abs(a - b)))


def cosine(x, y) -> float:
    """1 - cos(x, y); a zero vector is at distance 1 from anything but another zero vector."""
    a, b = _pair(x, y)
    if np.array_equal(a, b):
        return 0.0
    na, nb = np.sqrt(a @ a), np.sqrt(b @ b)
    if na == 0 or nb == 0:
        return 0.0 if na == nb else 1.0
    return float(min(2.0, max(0.0, 1.0 - (a @ b) / (na * nb))))


_POINTWISE = {"euclidean": euclidean, "manhattan": manhattan, "cosine": cosine}


class Embedding:
    """Row matrix split into binary and continuous columns, plus row statistics."""

    def __init__(self, X):
        X = feature_matrix(X) if len(X) and isinstance(X[0], FeatureVector) else np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise ContractViolation("expected a 2-D feature matrix")
        if not np.all(np.isfinite(X)):
            raise ContractViolation("feature matrix contains non-finite values")
        self.X = X
        binary = np.all((X == 0) | (X == 1), axis=0)
        self.bits = np.ascontiguousarray(X[:, binary])
        self.cont = np.ascontiguousarray(X[:, ~binary])
        self.bit_counts = self.bits.sum(axis=1)
        self.norms = np.sqrt(np.einsum("ij,ij->i", X, X))
        # Exact duplicate rows are at distance 0 under every metric.
        _, self.row_class = np.unique(X, axis=0, return_inverse=True)
        self.row_class = self.row_class.ravel()

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def block(self, rows: slice, metric: str) -> np.ndarray:
        """Distances from rows ``rows`` to every row, shape (len(rows), n)."""
        return self.blocks(rows, (metric,))[metric]

    def blocks(self, rows: slice, metrics: Sequence[str] = METRICS) -> dict[str, np.ndarray]:
        """Several metrics for one row block, sharing the products they have in common.

        The binary columns contribute the same Hamming count to euclidean and
        manhattan and the same dot product to cosine, so one matrix product over
        them serves all three.
        """
        shared = self.bits[rows] @ self.bits.T
        same = self.row_class[rows][:, None] == self.row_class[None, :]
        out = {}
        if "euclidean" in metrics or "manhattan" in metrics:
            hamming = np.maximum(self.bit_counts[rows][:, None] + self.bit_counts[None, :] - 2.0 * shared, 0.0)
            sq = hamming.copy() if "euclidean" in metrics else None
            ab = hamming if "manhattan" in metrics else None
            ca = self.cont[rows]
            for k in range(self.cont.shape[1]):
                diff = ca[:, k, None] - self.cont[None, :, k]
                if ab is not None:
                    ab += np.abs(diff)
                if sq is not None:
                    diff *= diff
                    sq += diff
            if sq is not None:
                out["euclidean"] = np.sqrt(sq, out=sq)
            if ab is not None:
                out["manhattan"] = ab
        if "cosine" in metrics:
            dot = shared + self.cont[rows] @ self.cont.T
            na = self.norms[rows][:, None]
            nb = self.norms[None, :]
            with np.errstate(divide="ignore", invalid="ignore"):
                d = 1.0 - dot / (na * nb)
            zero_a, zero_b = na == 0, nb == 0
            d = np.where(zero_a | zero_b, np.where(zero_a & zero_b, 0.0, 1.0), d)
            np.clip(d, 0.0, 2.0, out=d)
            out["cosine"] = d
        for d in out.values():
            d[same] = 0.0
        return out


def _check_metric(metric: str):
    if metric not in METRICS:
        raise ContractViolation(f"unknown metric {metric!r}; expected one of {METRICS}")


def distance_matrix(X, metric: str, block: int = DEFAULT_BLOCK, dtype=np.float64) -> DistanceMatrix:
    """Full n x n matrix for one metric over feature vectors or a row matrix."""
    _check_metric(metric)
    emb = X if isinstance(X, Embedding) else Embedding(X)
    out = np.empty((emb.n, emb.n), dtype=dtype)
    for start in range(0, emb.n, block):
        rows = slice(start, min(start + block, emb.n))
        out[rows] = emb.block(rows, metric)
    return _finish(out, metric)


def _finish(out: np.ndarray, metric: str) -> DistanceMatrix:
    # Enforce exact symmetry and a zero diagonal against rounding in the products.
    out = np.minimum(out, out.T) if metric != "cosine" else (out + out.T) / 2
    np.fill_diagonal(out, 0.0)
    return DistanceMatrix(out, metric)


def all_matrices(X, block: int = DEFAULT_BLOCK, dtype=np.float64) -> dict[str, DistanceMatrix]:
    emb = X if isinstance(X, Embedding) else Embedding(X)
    out = {m: np.empty((emb.n, emb.n), dtype=dtype) for m in METRICS}
    for start in range(0, emb.n, block):
        rows = slice(start, min(start + block, emb.n))
        for m, d in emb.blocks(rows).items():
            out[m][rows] = d
    return {m: _finish(out[m], m) for m in METRICS}


def pairwise_loop(X, metric: str) -> np.ndarray:
    """Reference matrix from the scalar metric functions; O(n^2 d), for checking."""
    _check_metric(metric)
    X = np.asarray(X, dtype=float)
    f = _POINTWISE[metric]
    n = len(X)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = f(X[i], X[j])
    return out


def _rescale(values: np.ndarray, peak: float) -> np.ndarray:
    return values / peak if peak > 0 else values


def combined_matrix(matrices: Sequence[DistanceMatrix] | dict) -> DistanceMatrix:
    """Average of the three per-metric matrices, each first divided by its own maximum."""
    if isinstance(matrices, dict):
        matrices = list(matrices.values())
    tags = sorted(m.metric for m in matrices)
    if tags != sorted(METRICS):
        raise ContractViolation(f"combined_matrix needs one matrix per metric {METRICS}, got {tags}")
    n = {m.n for m in matrices}
    if len(n) != 1:
        raise ContractViolation(f"matrix sizes differ: {sorted(n)}")
    acc = np.zeros(matrices[0].values.shape)
    for m in matrices:
        v = np.asarray(m.values, dtype=np.float64)
        acc += _rescale(v, float(v.max(initial=0.0)))
    return DistanceMatrix(acc / len(matrices), COMBINED)


@dataclass
class MatchResult:
    predictions: np.ndarray  # index of nearest other fingerprint, per row
    correct: np.ndarray      # bool per row
    eligible: np.ndarray     # bool per row: known device with >= 2 fingerprints

    @property
    def n_eligible(self) -> int:
        return int(self.eligible.sum())

    @property
    def accuracy(self) -> float:
        if not self.eligible.any():
            raise EvaluationError("no eligible fingerprints (every device is unknown or a singleton)")
        return float(self.correct[self.eligible].mean())


def eligibility(device_ids: Sequence[str]) -> np.ndarray:
    ids = np.asarray(device_ids, dtype=object)
    _, inverse, counts = np.unique(ids.astype(str), return_inverse=True, return_counts=True)
    return (counts[inverse.ravel()] >= 2) & (ids != UNKNOWN_DEVICE)


def _score(predictions: np.ndarray, device_ids: Sequence[str]) -> MatchResult:
    ids = np.asarray(device_ids, dtype=object)
    correct = ids[predictions] == ids
    return MatchResult(predictions, correct & (ids != UNKNOWN_DEVICE), eligibility(device_ids))


def nearest_neighbor_match(matrix: DistanceMatrix | np.ndarray, device_ids: Sequence[str],
                           block: int = 2048) -> MatchResult:
    """Row-wise argmin over j != i; ties go to the lowest index."""
    values = matrix.values if isinstance(matrix, DistanceMatrix) else np.asarray(matrix)
    n = values.shape[0]
    if n < 2:
        raise ContractViolation("matching needs at least 2 fingerprints")
    if len(device_ids) != n:
        raise ContractViolation(f"{len(device_ids)} labels for {n} fingerprints")
    predictions = np.empty(n, dtype=np.int64)
    for start in range(0, n, block):
        stop = min(start + block, n)
        rows = np.array(values[start:stop], dtype=np.float64)
        rows[np.arange(stop - start), np.arange(start, stop)] = np.inf
        predictions[start:stop] = np.argmin(rows, axis=1)
    return _score(predictions, device_ids)


def blocked_nearest_neighbor(X, device_ids: Sequence[str], metric: str = COMBINED,
                             block: int = 1024) -> MatchResult:
    """Nearest-neighbour matching without materialising any n x n matrix.

    For the combined metric a first pass finds each metric's global maximum and
    a second pass recomputes the blocks, combines them and takes the argmin.
    """
    emb = X if isinstance(X, Embedding) else Embedding(X)
    n = emb.n
    if n < 2:
        raise ContractViolation("matching needs at least 2 fingerprints")
    metrics = METRICS if metric == COMBINED else (metric,)
    for m in metrics:
        _check_metric(m)
    blocks = [slice(s, min(s + block, n)) for s in range(0, n, block)]
    peaks = {m: 0.0 if metric == COMBINED else 1.0 for m in metrics}
    if metric == COMBINED:
        for rows in blocks:
            for m, d in emb.blocks(rows, metrics).items():
                peaks[m] = max(peaks[m], float(d.max()))
    predictions = np.empty(n, dtype=np.int64)
    for rows in blocks:
        acc = np.zeros((rows.stop - rows.start, n))
        for m, d in emb.blocks(rows, metrics).items():
            acc += _rescale(d, peaks[m])
        acc[np.arange(rows.stop - rows.start), np.arange(rows.start, rows.stop)] = np.inf
        predictions[rows] = np.argmin(acc, axis=1)
    return _score(predictions, device_ids)


def match_fingerprints(vectors: Sequence[FeatureVector], metric: str = COMBINED) -> MatchResult:
    mats = all_matrices(vectors) if metric == COMBINED else None
    matrix = combined_matrix(mats) if mats else distance_matrix(vectors, metric)
    return nearest_neighbor_match(matrix, [v.device_id for v in vectors])


def pair_distances(X: np.ndarray, i: np.ndarray, j: np.ndarray, chunk: int = 20000) -> np.ndarray:
    """(euclidean, cosine, manhattan) for each row pair (i[k], j[k])."""
    X = np.asarray(X, dtype=float)
    i, j = np.asarray(i), np.asarray(j)
    out = np.empty((len(i), 3))
    norms = np.sqrt(np.einsum("ij,ij->i", X, X))
    for s in range(0, len(i), chunk):
        a, b = X[i[s:s + chunk]], X[j[s:s + chunk]]
        diff = a - b
        out[s:s + chunk, 0] = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        out[s:s + chunk, 2] = np.abs(diff).sum(axis=1)
        na, nb = norms[i[s:s + chunk]], norms[j[s:s + chunk]]
        dot = np.einsum("ij,ij->i", a, b)
        with np.errstate(divide="ignore", invalid="ignore"):
            cos = 1.0 - dot / (na * nb)
        cos = np.where((na == 0) | (nb == 0), np.where((na == 0) & (nb == 0), 0.0, 1.0), cos)
        out[s:s + chunk, 1] = np.clip(cos, 0.0, 2.0)
        same = np.all(diff == 0, axis=1)
        out[s:s + chunk][same] = 0.0
    return out


def write_matrix(path, matrix: DistanceMatrix) -> None:
    """Little-endian float32 dump behind a 16-byte header (magic, n, metric tag)."""
    header = MATRIX_MAGIC + struct.pack("<QI", matrix.n, _TAG_CODES[matrix.metric])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(matrix.values, dtype="<f4").tobytes())


def read_matrix(path) -> DistanceMatrix:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != MATRIX_MAGIC:
            raise FormatError(f"{path}: not a distance-matrix dump")
        n, code = struct.unpack("<QI", header[4:])
        body = np.frombuffer(fh.read(), dtype="<f4")
    if body.size != n * n:
        raise FormatError(f"{path}: expected {n * n} entries, found {body.size}")
    metric = {v: k for k, v in _TAG_CODES.items()}.get(code)
    if metric is None:
        raise FormatError(f"{path}: unknown metric code {code}")
    return DistanceMatrix(body.reshape(n, n).astype(np.float64), metric)


def write_match_csv(path_or_file, result: MatchResult, fingerprint_ids: Sequence[str]) -> None:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fingerprint_id", "predicted_id", "correct"])
        for k, p in enumerate(result.predictions):
            w.writerow([fingerprint_ids[k], fingerprint_ids[p], int(result.correct[k])])
    finally:
        if own:
            fh.close()
