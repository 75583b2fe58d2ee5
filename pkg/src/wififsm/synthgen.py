"""Synthetic management-frame traces with ground-truth device labels.

Each device is drawn from a :class:`VendorProfile`. Within a burst the device
walks the profile's Markov chain over FSM states, spacing frames by the
intra-burst gap; bursts are separated by inter-burst gaps strictly above one
second, so burst segmentation recovers the generated structure exactly.
Time is kept in integer microseconds, the pcap tick.
"""

from __future__ import annotations

import csv
import hashlib
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

from .errors import ConfigurationError, FormatError
from .fsm import DstClass, FsmState
from .ingest import (BROADCAST, FIXED_BODY_LENGTH, IE_BODY_OFFSET, LINKTYPE_IEEE802_11,
                     PCAP_MAGIC_USEC, SEQ_MODULUS, FrameSubtype, InformationElement,
                     MacAddress, ManagementFrame)

PROFILE_SCHEMA = "wififsm-profiles/1"
MAC_POLICIES = ("persistent", "rotate_per_burst", "rotate_per_k_bursts")
USEC = 1_000_000

CLIENT_IE_SUBTYPES = frozenset({FrameSubtype.PROBE_REQUEST, FrameSubtype.ASSOCIATION_REQUEST,
                                FrameSubtype.REASSOCIATION_REQUEST})


@dataclass(frozen=True)
class Distribution:
    """constant(low), uniform(low, high) or exponential(scale) shifted to low, truncated at high."""

    kind: str
    low: float
    high: float | None = None
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "uniform", "truncexp"):
            raise ConfigurationError(f"unknown distribution kind {self.kind!r}")
        if self.kind == "constant":
            object.__setattr__(self, "high", self.low)
        elif self.high is None or self.high < self.low:
            raise ConfigurationError(f"{self.kind} distribution needs high >= low")
        if self.kind == "truncexp" and self.scale <= 0:
            raise ConfigurationError("truncexp scale must be positive")

    @classmethod
    def constant(cls, value: float) -> "Distribution":
        return cls("constant", value)

    @classmethod
    def uniform(cls, low: float, high: float) -> "Distribution":
        return cls("uniform", low, high)

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "constant":
            return float(self.low)
        if self.kind == "uniform":
            return float(rng.uniform(self.low, self.high))
        # Inverse CDF of an exponential truncated to [0, high - low].
        span = self.high - self.low
        u = rng.uniform()
        return float(self.low - self.scale * math.log1p(-u * (1.0 - math.exp(-span / self.scale))))

    def sample_int(self, rng: np.random.Generator) -> int:
        if self.kind == "uniform":
            lo, hi = math.ceil(self.low), math.floor(self.high)
            if lo > hi:
                return int(round((self.low + self.high) / 2))
            return int(rng.integers(lo, hi + 1))
        return int(min(math.floor(self.high), math.floor(self.sample(rng))))

    def mean(self, integer: bool = False) -> float:
        if self.kind == "constant":
            return float(math.floor(self.low) if integer else self.low)
        if self.kind == "uniform":
            if integer:
                return (math.ceil(self.low) + math.floor(self.high)) / 2
            return (self.low + self.high) / 2
        span, s = self.high - self.low, self.scale
        if integer:
            grid = np.arange(math.floor(self.low), math.floor(self.high) + 1)
            norm = 1 - math.exp(-span / s)
            cdf = lambda x: (1 - np.exp(-np.clip(x - self.low, 0, span) / s)) / norm
            probs = cdf(grid + 1) - cdf(grid)
            return float(grid @ probs)
        return self.low + s - span * math.exp(-span / s) / (1 - math.exp(-span / s))

    def narrowed(self, rng: np.random.Generator, keep: float) -> "Distribution":
        """A sub-range covering a ``keep`` fraction of this one at a random position."""
        if self.kind == "constant" or keep >= 1.0:
            return self
        width = (self.high - self.low) * keep
        start = self.low + rng.uniform() * (self.high - self.low - width)
        return Distribution(self.kind, start, start + width, self.scale * max(keep, 1e-6))

    @classmethod
    def from_config(cls, spec) -> "Distribution":
        if isinstance(spec, (int, float)):
            return cls.constant(spec)
        if isinstance(spec, (list, tuple)) and len(spec) == 2:
            return cls.uniform(*spec)
        if isinstance(spec, Mapping):
            return cls(spec.get("kind", "uniform"), spec["low"], spec.get("high"), spec.get("scale", 1.0))
        raise ConfigurationError(f"cannot read distribution from {spec!r}")

    def to_config(self) -> dict:
        out = {"kind": self.kind, "low": self.low}
        if self.kind != "constant":
            out["high"] = self.high
        if self.kind == "truncexp":
            out["scale"] = self.scale
        return out


@dataclass(frozen=True)
class VendorProfile:
    name: str
    states: tuple[FsmState, ...]
    transition_probs: np.ndarray
    initial_state: FsmState
    frames_per_burst: Distribution
    intra_gap: Distribution
    inter_gap: Distribution
    bursts_per_device: Distribution
    ie_tags: Mapping[int, float] = field(default_factory=dict)
    seq_increment: Distribution = Distribution.constant(1)
    inter_burst_seq: Distribution = Distribution.constant(1)
    mac_policy: str = "persistent"
    rotate_k: int = 1
    is_ap: bool = False
    oui: bytes = b"\x3c\x22\xfb"
    personalization: float = 0.0
    seq_reset_on_rotate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "transition_probs", np.asarray(self.transition_probs, dtype=float))
        self.validate()

    def validate(self) -> None:
        k = len(self.states)
        P = self.transition_probs
        if k == 0 or P.shape != (k, k):
            raise ConfigurationError(f"{self.name}: transition matrix must be {k}x{k}")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-9):
            raise ConfigurationError(f"{self.name}: transition rows must be non-negative and sum to 1")
        if self.initial_state not in self.states:
            raise ConfigurationError(f"{self.name}: initial state not among states")
        if not (0 < self.intra_gap.low and self.intra_gap.high <= 1.0):
            raise ConfigurationError(f"{self.name}: intra-burst gaps must lie in (0, 1] s")
        if not self.inter_gap.low > 1.0:
            raise ConfigurationError(f"{self.name}: inter-burst gaps must exceed 1 s")
        if self.frames_per_burst.low < 1 or self.bursts_per_device.low < 1:
            raise ConfigurationError(f"{self.name}: frame and burst counts must be >= 1")
        if self.seq_increment.low < 1 or self.inter_burst_seq.low < 0:
            raise ConfigurationError(f"{self.name}: sequence increments must be positive")
        if self.mac_policy not in MAC_POLICIES:
            raise ConfigurationError(f"{self.name}: unknown mac_policy {self.mac_policy!r}")
        if self.rotate_k < 1:
            raise ConfigurationError(f"{self.name}: rotate_k must be >= 1")
        if any(not 0 <= t <= 255 or not 0 <= p <= 1 for t, p in self.ie_tags.items()):
            raise ConfigurationError(f"{self.name}: IE tags must be 0..255 with probabilities in [0, 1]")
        if not 0 <= self.personalization < 1:
            raise ConfigurationError(f"{self.name}: personalization must be in [0, 1)")
        if len(self.oui) != 3 or self.oui[0] & 0x03:
            raise ConfigurationError(f"{self.name}: OUI must be a globally administered unicast prefix")

    def expected_transitions(self) -> float:
        """Expected transitions in a one-burst FSM."""
        return self.frames_per_burst.mean(integer=True) - 1

    @classmethod
    def from_config(cls, cfg: Mapping) -> "VendorProfile":
        try:
            states = tuple(FsmState.parse(s) for s in cfg["states"])
            oui = bytes(int(p, 16) for p in str(cfg.get("oui", "3c:22:fb")).split(":"))
            policy = cfg.get("mac_policy", "persistent")
            return cls(
                name=str(cfg["name"]),
                states=states,
                transition_probs=np.array(cfg["transition_probs"], dtype=float),
                initial_state=FsmState.parse(cfg.get("initial_state", cfg["states"][0])),
                frames_per_burst=Distribution.from_config(cfg["frames_per_burst"]),
                intra_gap=Distribution.from_config(cfg["intra_gap"]),
                inter_gap=Distribution.from_config(cfg["inter_gap"]),
                bursts_per_device=Distribution.from_config(cfg["bursts_per_device"]),
                ie_tags={int(t): float(p) for t, p in (cfg.get("ie_tags") or {}).items()},
                seq_increment=Distribution.from_config(cfg.get("seq_increment", 1)),
                inter_burst_seq=Distribution.from_config(cfg.get("inter_burst_seq", 1)),
                mac_policy=policy,
                rotate_k=int(cfg.get("rotate_k", 1)),
                is_ap=bool(cfg.get("is_ap", False)),
                oui=oui,
                personalization=float(cfg.get("personalization", 0.0)),
                seq_reset_on_rotate=bool(cfg.get("seq_reset_on_rotate", False)),
            )
        except (KeyError, ValueError, TypeError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"bad profile {cfg.get('name', '?')!r}: {exc}") from None

    def to_config(self) -> dict:
        return {
            "name": self.name,
            "states": [str(s) for s in self.states],
            "transition_probs": self.transition_probs.tolist(),
            "initial_state": str(self.initial_state),
            "frames_per_burst": self.frames_per_burst.to_config(),
            "intra_gap": self.intra_gap.to_config(),
            "inter_gap": self.inter_gap.to_config(),
            "bursts_per_device": self.bursts_per_device.to_config(),
            "ie_tags": dict(self.ie_tags),
            "seq_increment": self.seq_increment.to_config(),
            "inter_burst_seq": self.inter_burst_seq.to_config(),
            "mac_policy": self.mac_policy,
            "rotate_k": self.rotate_k,
            "is_ap": self.is_ap,
            "oui": ":".join(f"{b:02x}" for b in self.oui),
            "personalization": self.personalization,
            "seq_reset_on_rotate": self.seq_reset_on_rotate,
        }


def load_profiles(path) -> tuple[list[tuple[VendorProfile, int]], dict]:
    """Read a profile file; returns ``([(profile, device_count), ...], settings)``."""
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    return profiles_from_config(doc)


def profiles_from_config(doc) -> tuple[list[tuple[VendorProfile, int]], dict]:
    if not isinstance(doc, Mapping) or doc.get("schema") != PROFILE_SCHEMA:
        raise ConfigurationError(f"profile file must declare schema: {PROFILE_SCHEMA}")
    entries = doc.get("profiles") or []
    if not entries:
        raise ConfigurationError("profile file lists no profiles")
    out = [(VendorProfile.from_config(e), int(e.get("count", 1))) for e in entries]
    return out, {k: v for k, v in doc.items() if k not in ("schema", "profiles")}


@dataclass
class GroundTruth:
    frame_devices: list[str]
    device_profiles: dict[str, str]
    mac_devices: dict[MacAddress, str]
    # per device, (start, end, n_frames) of every generated burst in time order
    device_bursts: dict[str, list[tuple[float, float, int]]]

    def device_of(self, mac: MacAddress) -> str:
        return self.mac_devices[mac]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["frame_ordinal", "device_id", "profile"])
            for k, d in enumerate(self.frame_devices):
                w.writerow([k, d, self.device_profiles[d]])


def read_ground_truth_csv(path) -> tuple[list[str], dict[str, str]]:
    """Read a ``write_csv`` file back as ``(device per frame ordinal, profile per device)``."""
    devices, profiles = [], {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["frame_ordinal", "device_id", "profile"]:
            raise FormatError(f"{path}: not a ground-truth CSV")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3 or not row[0].isdigit() or int(row[0]) != len(devices):
                raise FormatError(f"{path}:{lineno}: expected consecutive frame ordinals")
            devices.append(row[1])
            profiles[row[1]] = row[2]
    return devices, profiles


def _random_mac(rng: np.random.Generator, oui: bytes | None) -> MacAddress:
    tail = bytes(int(b) for b in rng.integers(0, 256, size=3 if oui else 6))
    if oui:
        return MacAddress(oui + tail)
    return MacAddress(bytes([(tail[0] & 0xFC) | 0x02]) + tail[1:])


def _ie_body(vendor: str, tag: int) -> bytes:
    if tag == 0:
        return b""  # wildcard SSID
    h = hashlib.sha256(f"{vendor}/{tag}".encode()).digest()
    return h[: 1 + h[0] % 8]


@dataclass
class _Device:
    device_id: str
    profile: VendorProfile
    rng: np.random.Generator
    frames_per_burst: Distribution
    intra_gap: Distribution
    inter_gap: Distribution
    seq_increment: Distribution
    inter_burst_seq: Distribution
    persistent_mac: MacAddress


def _make_device(profile: VendorProfile, device_id: str, seed_seq: np.random.SeedSequence) -> _Device:
    rng = np.random.default_rng(seed_seq)
    keep = 1.0 - profile.personalization
    return _Device(
        device_id=device_id,
        profile=profile,
        rng=rng,
        frames_per_burst=profile.frames_per_burst.narrowed(rng, keep),
        intra_gap=profile.intra_gap.narrowed(rng, keep),
        inter_gap=profile.inter_gap.narrowed(rng, keep),
        seq_increment=profile.seq_increment.narrowed(rng, keep),
        inter_burst_seq=profile.inter_burst_seq.narrowed(rng, keep),
        persistent_mac=_random_mac(rng, profile.oui),
    )


def _emit_device(dev: _Device, duration_us: int, ap_macs: Sequence[MacAddress], capture_id: str):
    """Yield ``(time_us, frame_without_timestamp_fields)`` tuples for one device."""
    prof, rng = dev.profile, dev.rng
    n_bursts = dev.profile.bursts_per_device.sample_int(rng)
    state_index = {s: k for k, s in enumerate(prof.states)}
    cum = np.cumsum(prof.transition_probs, axis=1)
    home_ap = ap_macs[int(rng.integers(len(ap_macs)))] if ap_macs else MacAddress(b"\x00\x1a\x11\x00\x00\x01")
    t = int(rng.integers(0, max(1, min(duration_us, int(dev.inter_gap.high * USEC)))))
    seq = int(rng.integers(SEQ_MODULUS))
    mac = dev.persistent_mac
    out, bursts = [], []
    for b in range(n_bursts):
        if b > 0:
            t += max(USEC + 1, int(round(dev.inter_gap.sample(rng) * USEC)))
            seq = (seq + dev.inter_burst_seq.sample_int(rng)) % SEQ_MODULUS
        if t > duration_us:
            break
        rotate = (prof.mac_policy == "rotate_per_burst"
                  or (prof.mac_policy == "rotate_per_k_bursts" and b % prof.rotate_k == 0))
        if rotate and not prof.is_ap:
            mac = _random_mac(rng, None)
            if prof.seq_reset_on_rotate:
                seq = int(rng.integers(SEQ_MODULUS))
        length = dev.frames_per_burst.sample_int(rng)
        state = state_index[prof.initial_state]
        start = t
        for k in range(length):
            if k > 0:
                t += min(USEC, max(1, int(round(dev.intra_gap.sample(rng) * USEC))))
                seq = (seq + dev.seq_increment.sample_int(rng)) % SEQ_MODULUS
                state = int(np.searchsorted(cum[state], rng.uniform(), side="right"))
                state = min(state, len(prof.states) - 1)
            fs = prof.states[state]
            dst = BROADCAST if fs.dst_class is DstClass.BROADCAST else home_ap
            ies = ()
            if fs.subtype in IE_BODY_OFFSET and (prof.is_ap or fs.subtype in CLIENT_IE_SUBTYPES):
                ies = tuple(InformationElement(tag, _ie_body(prof.name, tag))
                            for tag, p in sorted(prof.ie_tags.items()) if p >= 1.0 or rng.uniform() < p)
            out.append((t, ManagementFrame(timestamp=t / USEC, src=mac, dst=dst, subtype=fs.subtype,
                                           seq_num=seq, ies=ies, capture_id=capture_id)))
        bursts.append((start / USEC, t / USEC, length))
    return out, bursts


def generate_trace(profiles: Sequence[tuple[VendorProfile, int]], duration: float, seed: int = 0,
                   capture_id: str = "synthetic") -> tuple[list[ManagementFrame], GroundTruth]:
    """Deterministic labelled trace for ``[(profile, device_count), ...]``."""
    if not profiles:
        raise ConfigurationError("need at least one profile")
    if not duration > 0:
        raise ConfigurationError("duration must be positive")
    names = [p.name for p, _ in profiles]
    if len(set(names)) != len(names):
        raise ConfigurationError("profile names must be unique")
    children = iter(np.random.SeedSequence(seed).spawn(sum(c for _, c in profiles)))
    devices = [_make_device(p, f"{p.name}-{k:03d}", next(children))
               for p, count in profiles for k in range(count)]
    ap_macs = [d.persistent_mac for d in devices if d.profile.is_ap]
    duration_us = int(round(duration * USEC))

    tagged = []
    device_bursts = {}
    for order, dev in enumerate(devices):
        frames, bursts = _emit_device(dev, duration_us, ap_macs, capture_id)
        device_bursts[dev.device_id] = bursts
        tagged.extend((t, order, k, f) for k, (t, f) in enumerate(frames))
    tagged.sort(key=lambda x: x[:3])
    frames = [x[3] for x in tagged]
    frame_devices = [devices[x[1]].device_id for x in tagged]
    mac_devices = {}
    for f, d in zip(frames, frame_devices):
        if mac_devices.setdefault(f.src, d) != d:
            raise ConfigurationError(f"MAC collision between {mac_devices[f.src]} and {d}; change seed")
    truth = GroundTruth(frame_devices, {d.device_id: d.profile.name for d in devices},
                        mac_devices, device_bursts)
    return frames, truth


def _frame_bytes(f: ManagementFrame) -> bytes:
    fc = bytes([(int(f.subtype) << 4) | (0 << 2), 0])
    bssid = f.src if f.subtype in (FrameSubtype.BEACON, FrameSubtype.PROBE_RESPONSE) else f.dst
    header = fc + b"\x00\x00" + f.dst.octets + f.src.octets + bssid.octets + struct.pack("<H", f.seq_num << 4)
    if f.subtype in IE_BODY_OFFSET:
        body = bytes(IE_BODY_OFFSET[f.subtype]) + b"".join(
            bytes([ie.tag, len(ie.body)]) + ie.body for ie in f.ies)
    else:
        body = bytes(FIXED_BODY_LENGTH.get(f.subtype, 0))
    return header + body


def write_capture(frames: Sequence[ManagementFrame]) -> bytes:
    """Classic little-endian pcap, linktype 105, microsecond ticks (timestamps floored)."""
    parts = [struct.pack("<IHHiIII", PCAP_MAGIC_USEC, 2, 4, 0, 0, 65535, LINKTYPE_IEEE802_11)]
    for f in frames:
        # The tiny offset keeps values like 2.9999999999 (meant as 3 us) from flooring down.
        ticks = math.floor(f.timestamp * USEC + 1e-4)
        raw = _frame_bytes(f)
        parts.append(struct.pack("<IIII", ticks // USEC, ticks % USEC, len(raw), len(raw)))
        parts.append(raw)
    return b"".join(parts)


def save_capture(path, frames: Sequence[ManagementFrame]) -> None:
    Path(path).write_bytes(write_capture(frames))
