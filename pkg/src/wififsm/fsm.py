"""Per-group finite state machines over directional management-frame states."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Callable, Hashable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .burstseg import Burst, BurstGroup
from .errors import ContractViolation
from .ingest import SEQ_MODULUS, FrameSubtype, ManagementFrame


class DstClass(Enum):
    BROADCAST = "B"
    UNICAST = "U"


class FsmState(NamedTuple):
    subtype: FrameSubtype
    dst_class: DstClass

    @classmethod
    def of(cls, frame: ManagementFrame) -> "FsmState":
        return cls(frame.subtype, DstClass.BROADCAST if frame.dst.is_broadcast else DstClass.UNICAST)

    @classmethod
    def parse(cls, text: str) -> "FsmState":
        name, _, klass = text.partition("/")
        return cls(FrameSubtype[name], DstClass(klass))

    def __str__(self) -> str:
        return f"{self.subtype.name}/{self.dst_class.value}"


Transition = tuple[FsmState, FsmState]


@dataclass(frozen=True)
class Fsm:
    states: frozenset[FsmState]
    transitions: Mapping[Transition, int]
    initial: FsmState
    duration: float
    frame_count: int
    burst_count: int
    inter_burst_gaps: tuple[float, ...] = ()
    seq_span: int = 0
    start_time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "transitions", MappingProxyType(dict(self.transitions)))

    @property
    def transition_total(self) -> int:
        return sum(self.transitions.values())

    @property
    def self_transitions(self) -> int:
        return sum(c for (a, b), c in self.transitions.items() if a == b)

    def __eq__(self, other):
        if not isinstance(other, Fsm):
            return NotImplemented
        return (self.states == other.states and dict(self.transitions) == dict(other.transitions)
                and self.initial == other.initial and self.duration == other.duration
                and self.frame_count == other.frame_count and self.burst_count == other.burst_count
                and self.inter_burst_gaps == other.inter_burst_gaps
                and self.seq_span == other.seq_span)

    __hash__ = None


def seq_forward_gap(earlier: int, later: int) -> int:
    """Forward distance from ``earlier`` to ``later`` on the 12-bit sequence ring."""
    return (later - earlier) % SEQ_MODULUS


def _count_burst(burst: Burst, counts: Counter, states: set) -> None:
    prev = None
    for frame in burst.frames:
        state = FsmState.of(frame)
        states.add(state)
        if prev is not None:
            counts[(prev, state)] += 1
        prev = state


def build_fsm(group: BurstGroup | Sequence[Burst]) -> Fsm:
    """FSM of one burst group; adjacent frames inside a burst give one transition
    each, burst boundaries never do."""
    bursts = group.bursts if isinstance(group, BurstGroup) else tuple(group)
    if not bursts or any(len(b.frames) == 0 for b in bursts):
        raise ContractViolation("build_fsm needs a non-empty group of non-empty bursts")
    counts: Counter = Counter()
    states: set[FsmState] = set()
    for b in bursts:
        _count_burst(b, counts, states)
    gaps = tuple(nxt.start_time - cur.end_time for cur, nxt in zip(bursts, bursts[1:]))
    seq_span = max((seq_forward_gap(cur.frames[-1].seq_num, nxt.frames[0].seq_num)
                    for cur, nxt in zip(bursts, bursts[1:])), default=0)
    return Fsm(
        states=frozenset(states),
        transitions=dict(counts),
        initial=FsmState.of(bursts[0].frames[0]),
        duration=bursts[-1].end_time - bursts[0].start_time,
        frame_count=sum(len(b.frames) for b in bursts),
        burst_count=len(bursts),
        inter_burst_gaps=gaps,
        seq_span=seq_span,
        start_time=bursts[0].start_time,
    )


def merge_fsms(fsms: Sequence[Fsm]) -> Fsm:
    if not fsms:
        raise ContractViolation("merge_fsms needs at least one FSM")
    counts: Counter = Counter()
    for m in fsms:
        counts.update(m.transitions)
    first = min(fsms, key=lambda m: m.start_time)
    return Fsm(
        states=frozenset().union(*(m.states for m in fsms)),
        transitions=dict(counts),
        initial=first.initial,
        duration=sum(m.duration for m in fsms),
        frame_count=sum(m.frame_count for m in fsms),
        burst_count=sum(m.burst_count for m in fsms),
        inter_burst_gaps=tuple(g for m in fsms for g in m.inter_burst_gaps),
        seq_span=max(m.seq_span for m in fsms),
        start_time=first.start_time,
    )


def vendor_transition_means(fsms: Iterable[Fsm],
                            vendor_of: Callable[[Fsm], Hashable] | Sequence[Hashable]) -> dict:
    """Mean total transition count per FSM, keyed by vendor.

    ``vendor_of`` is either a function of the FSM or a sequence of vendor tags
    aligned with ``fsms``.
    """
    fsms = list(fsms)
    vendors = [vendor_of(m) for m in fsms] if callable(vendor_of) else list(vendor_of)
    if len(vendors) != len(fsms):
        raise ContractViolation("one vendor tag per FSM required")
    totals: dict = defaultdict(list)
    for m, v in zip(fsms, vendors):
        totals[v].append(m.transition_total)
    return {v: float(np.mean(t)) for v, t in totals.items()}
