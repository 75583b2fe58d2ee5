"""Reading 802.11 management frames out of classic pcap captures.

Only management frames with a recognised subtype are materialised. Control
and data frames, non-zero fragments, unknown subtypes and malformed records
are skipped and counted in :class:`ParseStats`; nothing in a capture body is
fatal. Only an unreadable global header or an unsupported link type raises.
"""

from __future__ import annotations

import hashlib
import hmac
import struct
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .errors import ConfigurationError, FormatError, UnsupportedLinkTypeError

LINKTYPE_IEEE802_11 = 105
LINKTYPE_RADIOTAP = 127

PCAP_MAGIC_USEC = 0xA1B2C3D4
PCAP_MAGIC_NSEC = 0xA1B23C4D

SEQ_MODULUS = 4096


class MacAddress(NamedTuple):
    """A 48-bit MAC address held as 6 raw octets."""

    octets: bytes

    @classmethod
    def parse(cls, text: str) -> "MacAddress":
        parts = text.replace("-", ":").split(":")
        if len(parts) != 6:
            raise ValueError(f"not a MAC address: {text!r}")
        return cls(bytes(int(p, 16) for p in parts))

    @classmethod
    def from_bytes(cls, raw: bytes) -> "MacAddress":
        if len(raw) != 6:
            raise ValueError(f"MAC address needs 6 octets, got {len(raw)}")
        return cls(bytes(raw))

    @property
    def is_locally_administered(self) -> bool:
        return bool(self.octets[0] & 0x02)

    @property
    def is_multicast(self) -> bool:
        return bool(self.octets[0] & 0x01)

    @property
    def is_broadcast(self) -> bool:
        return self.octets == b"\xff" * 6

    @property
    def oui(self) -> bytes:
        return self.octets[:3]

    def __str__(self) -> str:
        return ":".join(f"{b:02x}" for b in self.octets)

    def __repr__(self) -> str:
        return f"MacAddress('{self}')"


BROADCAST = MacAddress(b"\xff" * 6)


class FrameSubtype(IntEnum):
    ASSOCIATION_REQUEST = 0
    ASSOCIATION_RESPONSE = 1
    REASSOCIATION_REQUEST = 2
    REASSOCIATION_RESPONSE = 3
    PROBE_REQUEST = 4
    PROBE_RESPONSE = 5
    BEACON = 8
    DISASSOCIATION = 10
    AUTHENTICATION = 11
    DEAUTHENTICATION = 12
    ACTION = 13


# Length of the fixed (non-IE) body fields, for subtypes that carry IEs.
IE_BODY_OFFSET = {
    FrameSubtype.ASSOCIATION_REQUEST: 4,
    FrameSubtype.ASSOCIATION_RESPONSE: 6,
    FrameSubtype.REASSOCIATION_REQUEST: 10,
    FrameSubtype.REASSOCIATION_RESPONSE: 6,
    FrameSubtype.PROBE_REQUEST: 0,
    FrameSubtype.PROBE_RESPONSE: 12,
    FrameSubtype.BEACON: 12,
}

# Fixed body length of subtypes without an IE list.
FIXED_BODY_LENGTH = {
    FrameSubtype.DISASSOCIATION: 2,
    FrameSubtype.AUTHENTICATION: 6,
    FrameSubtype.DEAUTHENTICATION: 2,
    FrameSubtype.ACTION: 1,
}


class InformationElement(NamedTuple):
    tag: int
    body: bytes


@dataclass(frozen=True)
class ManagementFrame:
    timestamp: float
    src: MacAddress
    dst: MacAddress
    subtype: FrameSubtype
    seq_num: int
    ies: tuple[InformationElement, ...] = ()
    capture_id: str = "capture"
    sanitized: bool = False

    def __post_init__(self):
        if not 0 <= self.seq_num < SEQ_MODULUS:
            raise ValueError(f"seq_num {self.seq_num} outside 0..4095")
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp {self.timestamp}")

    @property
    def ie_tags(self) -> frozenset[int]:
        return frozenset(ie.tag for ie in self.ies)


@dataclass
class ParseStats:
    records: int = 0
    management: int = 0
    dropped_non_management: int = 0
    dropped_fragments: int = 0
    unknown_subtype: int = 0
    malformed: int = 0
    truncated_records: int = 0

    @property
    def skipped(self) -> int:
        return (self.dropped_non_management + self.dropped_fragments
                + self.unknown_subtype + self.malformed + self.truncated_records)


class MalformedFrame(Exception):
    pass


def _parse_ies(body: bytes) -> tuple[InformationElement, ...]:
    ies = []
    pos = 0
    while pos < len(body):
        if pos + 2 > len(body):
            raise MalformedFrame("truncated IE header")
        tag, length = body[pos], body[pos + 1]
        end = pos + 2 + length
        if end > len(body):
            raise MalformedFrame(f"IE {tag} overruns frame")
        ies.append(InformationElement(tag, bytes(body[pos + 2:end])))
        pos = end
    return tuple(ies)


# (alignment, size) of radiotap fields preceding the Flags byte we care about.
_RT_TSFT = (8, 8)
_RT_FLAG_FCS = 0x10


def _strip_radiotap(packet: bytes) -> bytes:
    if len(packet) < 8:
        raise MalformedFrame("short radiotap header")
    version, _pad, rt_len, present = struct.unpack_from("<BBHI", packet, 0)
    if version != 0 or rt_len < 8 or rt_len > len(packet):
        raise MalformedFrame("bad radiotap header")
    # Walk extended present words to find the start of the field area.
    offset = 8
    word = present
    while word & (1 << 31):
        if offset + 4 > rt_len:
            raise MalformedFrame("bad radiotap present chain")
        (word,) = struct.unpack_from("<I", packet, offset)
        offset += 4
    frame = packet[rt_len:]
    if present & 0x2:  # Flags field present
        if present & 0x1:
            align, size = _RT_TSFT
            offset = (offset + align - 1) // align * align + size
        if offset < rt_len and packet[offset] & _RT_FLAG_FCS:
            if len(frame) < 4:
                raise MalformedFrame("FCS flagged on short frame")
            frame = frame[:-4]
    return frame


def decode_frame(raw: bytes, timestamp: float, capture_id: str,
                 stats: ParseStats) -> ManagementFrame | None:
    """Decode one raw 802.11 frame; return None if it is not kept."""
    if len(raw) < 2:
        raise MalformedFrame("short frame control")
    fc0, fc1 = raw[0], raw[1]
    ftype = (fc0 >> 2) & 0x3
    subtype_code = (fc0 >> 4) & 0xF
    if fc0 & 0x3:
        raise MalformedFrame("unknown protocol version")
    if ftype != 0:
        stats.dropped_non_management += 1
        return None
    try:
        subtype = FrameSubtype(subtype_code)
    except ValueError:
        stats.unknown_subtype += 1
        return None
    if len(raw) < 24:
        raise MalformedFrame("short management header")
    dst = MacAddress(bytes(raw[4:10]))
    src = MacAddress(bytes(raw[10:16]))
    (seq_ctl,) = struct.unpack_from("<H", raw, 22)
    if seq_ctl & 0xF:
        stats.dropped_fragments += 1
        return None
    body = raw[24:]
    ies: tuple[InformationElement, ...] = ()
    protected = bool(fc1 & 0x40)
    if subtype in IE_BODY_OFFSET and not protected:
        fixed = IE_BODY_OFFSET[subtype]
        if len(body) < fixed:
            raise MalformedFrame("short fixed body")
        ies = _parse_ies(body[fixed:])
    elif subtype in FIXED_BODY_LENGTH and not protected:
        if len(body) < FIXED_BODY_LENGTH[subtype]:
            raise MalformedFrame("short fixed body")
    return ManagementFrame(timestamp=timestamp, src=src, dst=dst, subtype=subtype,
                           seq_num=seq_ctl >> 4, ies=ies, capture_id=capture_id)


class CaptureParser:
    """Streaming reader for classic pcap byte strings.

    ``stats`` is reset by every call to :meth:`parse` and describes what was
    dropped from the last capture.
    """

    def __init__(self, capture_id: str = "capture"):
        self.capture_id = capture_id
        self.stats = ParseStats()
        self.linktype: int | None = None

    def _header(self, data: bytes):
        if len(data) < 24:
            raise FormatError("pcap global header truncated")
        for endian in "<>":
            (magic,) = struct.unpack_from(endian + "I", data, 0)
            if magic in (PCAP_MAGIC_USEC, PCAP_MAGIC_NSEC):
                break
        else:
            raise FormatError(f"not a classic pcap file (magic {data[:4].hex()})")
        ticks_per_second = 1_000_000 if magic == PCAP_MAGIC_USEC else 1_000_000_000
        _vmaj, _vmin, _zone, _sig, _snap, linktype = struct.unpack_from(endian + "HHiIII", data, 4)
        linktype &= 0x0FFFFFFF
        if linktype not in (LINKTYPE_IEEE802_11, LINKTYPE_RADIOTAP):
            raise UnsupportedLinkTypeError(linktype)
        return endian, ticks_per_second, linktype

    def iter_frames(self, data: bytes) -> Iterable[ManagementFrame]:
        self.stats = ParseStats()
        endian, ticks_per_second, self.linktype = self._header(data)
        record = struct.Struct(endian + "IIII")
        pos = 24
        while pos < len(data):
            if pos + 16 > len(data):
                self.stats.truncated_records += 1
                break
            ts_sec, ts_frac, incl_len, _orig = record.unpack_from(data, pos)
            pos += 16
            if pos + incl_len > len(data):
                self.stats.truncated_records += 1
                break
            packet = data[pos:pos + incl_len]
            pos += incl_len
            self.stats.records += 1
            # Integer ticks first, one division: matches how writers quantise time.
            timestamp = (ts_sec * ticks_per_second + ts_frac) / ticks_per_second
            try:
                if self.linktype == LINKTYPE_RADIOTAP:
                    packet = _strip_radiotap(packet)
                frame = decode_frame(packet, timestamp, self.capture_id, self.stats)
            except (MalformedFrame, struct.error, ValueError):
                self.stats.malformed += 1
                continue
            if frame is not None:
                self.stats.management += 1
                yield frame

    def parse(self, data: bytes) -> list[ManagementFrame]:
        return list(self.iter_frames(data))


def parse_capture(data: bytes, capture_id: str = "capture") -> list[ManagementFrame]:
    """Return every recognised management frame in ``data`` in capture order."""
    return CaptureParser(capture_id).parse(data)


def read_capture(path, capture_id: str | None = None) -> tuple[list[ManagementFrame], ParseStats]:
    path = Path(path)
    parser = CaptureParser(capture_id or path.stem)
    frames = parser.parse(path.read_bytes())
    return frames, parser.stats


def pseudonymize_mac(mac: MacAddress, salt: bytes) -> MacAddress:
    """Keyed 46-bit pseudonym carrying over the U/L and multicast bits."""
    if mac.is_broadcast:
        return mac
    digest = hmac.new(salt, mac.octets, hashlib.sha256).digest()[:6]
    first = (digest[0] & 0xFC) | (mac.octets[0] & 0x03)
    return MacAddress(bytes([first]) + digest[1:])


def sanitize(frames: Sequence[ManagementFrame], salt: bytes) -> list[ManagementFrame]:
    """Pseudonymise MACs, blank SSIDs and rebase timestamps to the first frame.

    Frames already flagged ``sanitized`` keep their addresses, which makes the
    operation idempotent under a fixed salt.
    """
    if not salt:
        raise ConfigurationError("sanitize needs a non-empty salt")
    if not frames:
        raise ConfigurationError("sanitize needs at least one frame")
    t0 = frames[0].timestamp
    cache: dict[MacAddress, MacAddress] = {}

    def pseudo(mac: MacAddress) -> MacAddress:
        if mac not in cache:
            cache[mac] = pseudonymize_mac(mac, salt)
        return cache[mac]

    out = []
    for f in frames:
        ies = tuple(InformationElement(0, bytes(len(ie.body))) if ie.tag == 0 else ie
                    for ie in f.ies)
        src, dst = (f.src, f.dst) if f.sanitized else (pseudo(f.src), pseudo(f.dst))
        out.append(replace(f, timestamp=max(0.0, f.timestamp - t0), src=src, dst=dst,
                           ies=ies, sanitized=True))
    return out


def is_randomized_mac(mac: MacAddress, oui_table: frozenset[bytes] | set[bytes] = frozenset()) -> bool:
    """True if ``mac`` is locally administered or (given a table) has an unknown OUI."""
    if mac.octets[0] & 0x02:
        return True
    if not oui_table:
        return False
    return mac.octets[:3] not in oui_table


def parse_oui_table(lines: Iterable[str]) -> frozenset[bytes]:
    prefixes = set()
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        token = line.split()[0].replace("-", ":")
        parts = token.split(":")
        if len(parts) != 3:
            raise ConfigurationError(f"OUI table line {lineno}: expected XX:XX:XX, got {token!r}")
        try:
            prefixes.add(bytes(int(p, 16) for p in parts))
        except ValueError as exc:
            raise ConfigurationError(f"OUI table line {lineno}: {exc}") from None
    return frozenset(prefixes)


def load_oui_table(path) -> frozenset[bytes]:
    with open(path, encoding="utf-8") as fh:
        return parse_oui_table(fh)
