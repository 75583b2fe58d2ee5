"""IE-signature and sequence-number association baselines, and discrimination accuracy.

A target probe request is associated with one earlier probe request seen
within ``[t - tau, t)`` under a different identifier. The association is
correct when both probes come from the same device.
"""

from __future__ import annotations

import bisect
import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .burstseg import UNKNOWN_DEVICE, BurstGroup
from .errors import ConfigurationError, EvaluationError
from .featurize import tags_to_bitmap
from .ingest import SEQ_MODULUS, FrameSubtype

METHODS = ("ie", "seq", "fsm")


@dataclass(frozen=True)
class ProbeEvent:
    time: float
    mac: str
    seq_num: int
    ie_bitmap: int
    device_id: str
    fingerprint: int = -1  # row of the enclosing fingerprint, for the fsm method


def probe_events(groups: Sequence[BurstGroup]) -> list[ProbeEvent]:
    """One event per probe request; the identifier is the group's pseudo id, so it
    rotates at group boundaries. ``fingerprint`` indexes into ``groups``."""
    events = [ProbeEvent(f.timestamp, g.pseudo_id, f.seq_num, tags_to_bitmap(f.ie_tags), g.device_id, k)
              for k, g in enumerate(groups) for f in g.frames
              if f.subtype == FrameSubtype.PROBE_REQUEST]
    events.sort(key=lambda e: (e.time, e.fingerprint))
    return events


def jaccard(a: int, b: int) -> float:
    union = (a | b).bit_count()
    if union == 0:
        return 1.0
    return (a & b).bit_count() / union


def _pick(candidates: Sequence[ProbeEvent], score) -> ProbeEvent | None:
    """Highest score; ties go to the most recent candidate (later in the list on equal times)."""
    best, best_key = None, None
    for k, c in enumerate(candidates):
        key = (score(c), c.time, k)
        if best_key is None or key > best_key:
            best, best_key = c, key
    return best


def ie_baseline_associate(target: ProbeEvent, candidates: Sequence[ProbeEvent]) -> ProbeEvent | None:
    return _pick(candidates, lambda c: jaccard(target.ie_bitmap, c.ie_bitmap))


def seq_forward_gap(earlier: int, later: int) -> int:
    return (later - earlier) % SEQ_MODULUS


def seq_baseline_associate(target: ProbeEvent, candidates: Sequence[ProbeEvent]) -> ProbeEvent | None:
    return _pick(candidates, lambda c: -seq_forward_gap(c.seq_num, target.seq_num))


def fsm_associate(target: ProbeEvent, candidates: Sequence[ProbeEvent], distance: np.ndarray) -> ProbeEvent | None:
    """Candidate whose fingerprint is nearest to the target's under ``distance``."""
    row = distance[target.fingerprint]
    return _pick(candidates, lambda c: -float(row[c.fingerprint]))


def window(events: Sequence[ProbeEvent], times: Sequence[float], k: int, tau: float) -> list[ProbeEvent]:
    """Events in ``[t_k - tau, t_k)`` carrying a different identifier from event ``k``."""
    t = events[k].time
    lo = bisect.bisect_left(times, t - tau)
    hi = bisect.bisect_left(times, t)
    mac = events[k].mac
    return [c for c in events[lo:hi] if c.mac != mac]


def discrimination_accuracy(events: Sequence[ProbeEvent], method: str, samples: int = 1000,
                            tau: float = 600.0, seed: int = 0,
                            distance: np.ndarray | None = None) -> float:
    """Share of sampled target probes associated with a probe of the same device.

    Targets are drawn without replacement among known-device events that have at
    least one in-window candidate; when fewer than ``samples`` qualify, all are used.
    ``distance`` (fingerprint x fingerprint, e.g. a combined matrix) is required
    for ``method='fsm'``.
    """
    if method not in METHODS:
        raise ConfigurationError(f"unknown association method {method!r}")
    if tau < 0 or samples < 1:
        raise ConfigurationError("tau must be >= 0 and samples >= 1")
    if method == "fsm" and distance is None:
        raise ConfigurationError("the fsm method needs a fingerprint distance matrix")
    events = sorted(events, key=lambda e: (e.time, e.fingerprint))
    times = [e.time for e in events]
    t = np.asarray(times)
    _, codes = np.unique(np.array([e.mac for e in events], dtype=object).astype(str), return_inverse=True)
    lo = np.searchsorted(t, t - tau, side="left")
    hi = np.searchsorted(t, t, side="left")
    eligible = [k for k, e in enumerate(events)
                if e.device_id != UNKNOWN_DEVICE and hi[k] > lo[k]
                and np.any(codes[lo[k]:hi[k]] != codes[k])]
    if not eligible:
        raise EvaluationError(f"no probe request has an in-window predecessor (tau={tau})")
    rng = np.random.default_rng(seed)
    drawn = sorted(rng.choice(len(eligible), size=min(samples, len(eligible)), replace=False))
    correct = 0
    for d in drawn:
        k = eligible[d]
        cands = window(events, times, k, tau)
        if method == "ie":
            chosen = ie_baseline_associate(events[k], cands)
        elif method == "seq":
            chosen = seq_baseline_associate(events[k], cands)
        else:
            chosen = fsm_associate(events[k], cands, distance)
        correct += chosen.device_id == events[k].device_id
    return correct / len(drawn)


RESULT_FIELDS = ("method", "P", "tau", "samples", "accuracy", "seed")


def write_results_csv(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in RESULT_FIELDS})
