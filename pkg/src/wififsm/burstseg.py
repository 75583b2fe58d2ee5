"""Client filtering, burst segmentation and P-sized burst grouping."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

from .errors import ConfigurationError
from .ingest import FrameSubtype, MacAddress, ManagementFrame, is_randomized_mac

BURST_GAP = 1.0
# Gap comparisons tolerate float noise far below the 1 us pcap tick, so a gap of
# exactly 1.000000 s stays inside its burst after timestamp arithmetic.
GAP_TOLERANCE = 1e-9
UNKNOWN_DEVICE = "unknown"
AP_SUBTYPES = frozenset({FrameSubtype.BEACON, FrameSubtype.ASSOCIATION_RESPONSE})


@dataclass(frozen=True)
class Burst:
    mac: MacAddress
    frames: tuple[ManagementFrame, ...]
    index_within_mac: int
    capture_id: str = "capture"

    @property
    def start_time(self) -> float:
        return self.frames[0].timestamp

    @property
    def end_time(self) -> float:
        return self.frames[-1].timestamp

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class BurstGroup:
    pseudo_id: str
    device_id: str
    bursts: tuple[Burst, ...]
    partial: bool = False

    @property
    def frames(self) -> list[ManagementFrame]:
        return [f for b in self.bursts for f in b.frames]

    @property
    def known(self) -> bool:
        return self.device_id != UNKNOWN_DEVICE


def filter_clients(frames: Iterable[ManagementFrame]):
    """Drop every frame sent by a MAC that ever sends a Beacon or Association Response.

    Returns ``(client_frames, excluded_macs)``.
    """
    frames = list(frames)
    excluded = {f.src for f in frames if f.subtype in AP_SUBTYPES}
    return [f for f in frames if f.src not in excluded], excluded


def segment_bursts(frames: Iterable[ManagementFrame], gap: float = BURST_GAP) -> list[Burst]:
    """Split each (capture, source MAC) stream wherever consecutive frames are more
    than ``gap`` seconds apart. A gap of exactly ``gap`` stays inside the burst.

    Output is ordered by burst start time, then MAC.
    """
    if not gap > 0:
        raise ConfigurationError(f"burst gap must be positive, got {gap}")
    # sorted() is stable, so equal timestamps keep their input order.
    ordered = sorted(frames, key=lambda f: f.timestamp)
    streams: dict[tuple[str, MacAddress], list[list[ManagementFrame]]] = defaultdict(list)
    for f in ordered:
        runs = streams[(f.capture_id, f.src)]
        if runs and f.timestamp - runs[-1][-1].timestamp <= gap + GAP_TOLERANCE:
            runs[-1].append(f)
        else:
            runs.append([f])
    bursts = [Burst(mac=mac, frames=tuple(run), index_within_mac=k, capture_id=cap)
              for (cap, mac), runs in streams.items()
              for k, run in enumerate(runs)]
    bursts.sort(key=lambda b: (b.start_time, b.mac.octets, b.capture_id))
    return bursts


def persistent_device_map(bursts: Iterable[Burst], oui_table=frozenset()) -> dict[MacAddress, str]:
    """Ground truth from persistent MACs: each non-randomized MAC is its own device,
    randomized MACs map to ``UNKNOWN_DEVICE``."""
    return {b.mac: (UNKNOWN_DEVICE if is_randomized_mac(b.mac, oui_table) else str(b.mac))
            for b in bursts}


def group_bursts(bursts: Sequence[Burst], P: int | float | None,
                 device_map: Mapping[MacAddress, str] | Callable[[Burst], str]) -> list[BurstGroup]:
    """Chunk each device's time-ordered bursts into groups of ``P``.

    ``P=None`` or ``math.inf`` puts all of a device's bursts in one group. A
    shorter trailing chunk is emitted with ``partial=True``. Bursts whose device
    is unknown are grouped per MAC, never across MACs.
    """
    if P is None:
        P = math.inf
    if not (P == math.inf or (isinstance(P, int) and P >= 1)):
        raise ConfigurationError(f"grouping size P must be an integer >= 1, got {P!r}")
    lookup = device_map if callable(device_map) else (lambda b: device_map[b.mac])

    per_device: dict[tuple, list[Burst]] = defaultdict(list)
    for b in bursts:
        try:
            device = lookup(b)
        except KeyError:
            raise ConfigurationError(f"device map has no entry for {b.mac}") from None
        key = (device,) if device != UNKNOWN_DEVICE else (device, b.capture_id, b.mac)
        per_device[key].append(b)

    chunks = []
    for key, items in per_device.items():
        items.sort(key=lambda b: (b.start_time, b.index_within_mac))
        size = len(items) if P == math.inf else P
        for k in range(0, len(items), size):
            chunk = tuple(items[k:k + size])
            chunks.append((key[0], chunk, len(chunk) < size))
    chunks.sort(key=lambda c: (c[1][0].start_time, c[1][0].mac.octets))
    return [BurstGroup(pseudo_id=f"g{i:06d}", device_id=device, bursts=chunk, partial=partial)
            for i, (device, chunk, partial) in enumerate(chunks)]
