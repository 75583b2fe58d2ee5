"""Fixed-length embedding of FSM fingerprints.

A fingerprint is seven scalar FSM statistics followed by a 256-flag
information-element presence bitmap, 263 dimensions in all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .burstseg import UNKNOWN_DEVICE, BurstGroup
from .errors import ConfigurationError, ContractViolation
from .fsm import Fsm, build_fsm
from .ingest import FrameSubtype

SCALAR_NAMES = ("x1_states", "x2_transitions", "x3_self_transitions", "x4_entropy",
                "x5_transition_rate", "x6_time_gap", "x7_seq_gap")
N_SCALARS = len(SCALAR_NAMES)
IE_BITS = 256
DIM = N_SCALARS + IE_BITS


@dataclass(frozen=True)
class FeatureVector:
    x1_states: float
    x2_transitions: float
    x3_self_transitions: float
    x4_entropy: float
    x5_transition_rate: float
    x6_time_gap: float
    x7_seq_gap: float
    ie_bitmap: int = 0  # bit t set iff IE tag t present
    normalized: bool = False
    fingerprint_id: str = ""
    device_id: str = UNKNOWN_DEVICE

    @property
    def scalars(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in SCALAR_NAMES], dtype=float)

    @property
    def ie_flags(self) -> np.ndarray:
        return bitmap_to_array(self.ie_bitmap)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.scalars, self.ie_flags])

    @property
    def ie_hex(self) -> str:
        return f"{self.ie_bitmap:064x}"


def bitmap_to_array(bitmap: int) -> np.ndarray:
    raw = np.frombuffer(bitmap.to_bytes(IE_BITS // 8, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little").astype(float)


def tags_to_bitmap(tags: Iterable[int]) -> int:
    value = 0
    for t in tags:
        if not 0 <= t < IE_BITS:
            raise ValueError(f"IE tag {t} outside 0..255")
        value |= 1 << t
    return value


def transition_entropy(counts: Iterable[int]) -> float:
    """Shannon entropy (bits) of the empirical distribution over transition pairs."""
    c = np.asarray([x for x in counts if x > 0], dtype=float)
    if c.size <= 1:
        return 0.0
    p = c / c.sum()
    return float(max(0.0, -np.sum(p * np.log2(p))))


def ie_bitmap(group: BurstGroup, selector_seed: int) -> int:
    """Presence bitmap of the IE tags of one seeded-uniformly chosen probe request."""
    probes = [f for f in group.frames if f.subtype == FrameSubtype.PROBE_REQUEST]
    if not probes:
        return 0
    chosen = probes[int(np.random.default_rng(selector_seed).integers(len(probes)))]
    return tags_to_bitmap(chosen.ie_tags)


def extract_features(fsm: Fsm, group: BurstGroup, selector_seed: int = 0) -> FeatureVector:
    x2 = fsm.transition_total
    return FeatureVector(
        x1_states=float(len(fsm.states)),
        x2_transitions=float(x2),
        x3_self_transitions=float(fsm.self_transitions),
        x4_entropy=transition_entropy(fsm.transitions.values()),
        x5_transition_rate=x2 / fsm.duration if fsm.duration > 0 else 0.0,
        x6_time_gap=max(fsm.inter_burst_gaps, default=0.0),
        x7_seq_gap=float(fsm.seq_span),
        ie_bitmap=ie_bitmap(group, selector_seed),
        fingerprint_id=group.pseudo_id,
        device_id=group.device_id,
    )


def group_seed(seed: int, index: int) -> int:
    """Per-group IE selector seed derived from a run seed."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def fingerprint_groups(groups: Sequence[BurstGroup], seed: int = 0) -> tuple[list[Fsm], list[FeatureVector]]:
    fsms = [build_fsm(g) for g in groups]
    vectors = [extract_features(m, g, group_seed(seed, i)) for i, (m, g) in enumerate(zip(fsms, groups))]
    return fsms, vectors


def feature_matrix(vectors: Sequence[FeatureVector]) -> np.ndarray:
    """(n, 263) array; rows in input order."""
    if not vectors:
        return np.empty((0, DIM))
    scal = np.array([[getattr(v, n) for n in SCALAR_NAMES] for v in vectors], dtype=float)
    raw = b"".join(v.ie_bitmap.to_bytes(IE_BITS // 8, "little") for v in vectors)
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8).reshape(len(vectors), -1),
                         axis=1, bitorder="little").astype(float)
    return np.hstack([scal, bits])


class FeatureScaler:
    """Population z-scoring of the seven scalar features."""

    def __init__(self):
        self.mean_: np.ndarray | None = None
        self.std_: np.ndarray | None = None

    def fit(self, vectors: Sequence[FeatureVector]) -> "FeatureScaler":
        if len(vectors) < 2:
            raise ConfigurationError("normalization needs at least 2 feature vectors")
        s = np.array([v.scalars for v in vectors])
        self.mean_ = s.mean(axis=0)
        std = s.std(axis=0)
        # Rounding residue on a constant column counts as zero variance.
        std[std <= 1e-12 * np.maximum(1.0, np.abs(self.mean_))] = 0.0
        self.std_ = std
        return self

    def transform(self, vectors: Sequence[FeatureVector]) -> list[FeatureVector]:
        if self.mean_ is None:
            raise ContractViolation("scaler used before fit")
        out = []
        for v in vectors:
            safe = np.where(self.std_ > 0, self.std_, 1.0)
            z = np.where(self.std_ > 0, (v.scalars - self.mean_) / safe, 0.0)
            out.append(replace(v, normalized=True, **dict(zip(SCALAR_NAMES, map(float, z)))))
        return out


def normalize_features(vectors: Sequence[FeatureVector]) -> list[FeatureVector]:
    return FeatureScaler().fit(vectors).transform(vectors)
