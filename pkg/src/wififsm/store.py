"""Versioned newline-delimited record files.

Every file starts with a header line ``{"schema": ..., "producer": ..., "seed": ...}``
followed by one JSON object per line. Field order is fixed per schema and
floats are written in their shortest round-tripping form, so identical
inputs give byte-identical files.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, NamedTuple, Sequence

from . import __version__
from .burstseg import Burst, BurstGroup
from .errors import RecordParseError, SchemaError, StorageError
from .featurize import SCALAR_NAMES, FeatureVector
from .fsm import Fsm, FsmState
from .ingest import FrameSubtype, InformationElement, MacAddress, ManagementFrame

PRODUCER = f"wififsm/{__version__}"


class BurstRef(NamedTuple):
    capture_id: str
    mac: MacAddress
    index_within_mac: int
    start_time: float
    end_time: float
    frames: tuple[int, ...]  # ordinals within the capture


class GroupRef(NamedTuple):
    pseudo_id: str
    device_id: str
    partial: bool
    bursts: tuple[tuple[str, MacAddress, int], ...]


class FsmRecord(NamedTuple):
    pseudo_id: str
    device_id: str
    fsm: Fsm


# --- codecs: record -> ordered dict, dict -> record ---------------------------

def _frame_out(f: ManagementFrame) -> dict:
    return {"capture_id": f.capture_id, "timestamp": f.timestamp, "src": str(f.src), "dst": str(f.dst),
            "subtype": f.subtype.name, "seq_num": f.seq_num,
            "ies": [[ie.tag, ie.body.hex()] for ie in f.ies], "sanitized": f.sanitized}


def _frame_in(d: dict) -> ManagementFrame:
    return ManagementFrame(timestamp=float(d["timestamp"]), src=MacAddress.parse(d["src"]),
                           dst=MacAddress.parse(d["dst"]), subtype=FrameSubtype[d["subtype"]],
                           seq_num=_int(d["seq_num"]),
                           ies=tuple(InformationElement(_int(t), bytes.fromhex(b)) for t, b in d["ies"]),
                           capture_id=str(d["capture_id"]), sanitized=_bool(d["sanitized"]))


def _burst_out(b) -> dict:
    return {"capture_id": b.capture_id, "mac": str(b.mac), "index_within_mac": b.index_within_mac,
            "start_time": b.start_time, "end_time": b.end_time, "frames": list(b.frames)}


def _burst_in(d: dict) -> BurstRef:
    return BurstRef(str(d["capture_id"]), MacAddress.parse(d["mac"]), _int(d["index_within_mac"]),
                    float(d["start_time"]), float(d["end_time"]), tuple(_int(x) for x in d["frames"]))


def _group_out(g) -> dict:
    return {"pseudo_id": g.pseudo_id, "device_id": g.device_id, "partial": g.partial,
            "bursts": [[c, str(m), k] for c, m, k in g.bursts]}


def _group_in(d: dict) -> GroupRef:
    return GroupRef(str(d["pseudo_id"]), str(d["device_id"]), _bool(d["partial"]),
                    tuple((str(c), MacAddress.parse(m), _int(k)) for c, m, k in d["bursts"]))


def _fsm_out(r: FsmRecord) -> dict:
    m = r.fsm
    trans = sorted(([str(a), str(b), c] for (a, b), c in m.transitions.items()))
    return {"pseudo_id": r.pseudo_id, "device_id": r.device_id, "states": sorted(str(s) for s in m.states),
            "transitions": trans, "initial": str(m.initial), "duration": m.duration,
            "frame_count": m.frame_count, "burst_count": m.burst_count,
            "inter_burst_gaps": list(m.inter_burst_gaps), "seq_span": m.seq_span, "start_time": m.start_time}


def _fsm_in(d: dict) -> FsmRecord:
    fsm = Fsm(states=frozenset(FsmState.parse(s) for s in d["states"]),
              transitions={(FsmState.parse(a), FsmState.parse(b)): _int(c) for a, b, c in d["transitions"]},
              initial=FsmState.parse(d["initial"]), duration=float(d["duration"]),
              frame_count=_int(d["frame_count"]), burst_count=_int(d["burst_count"]),
              inter_burst_gaps=tuple(float(g) for g in d["inter_burst_gaps"]),
              seq_span=_int(d["seq_span"]), start_time=float(d["start_time"]))
    return FsmRecord(str(d["pseudo_id"]), str(d["device_id"]), fsm)


def _features_out(v: FeatureVector) -> dict:
    out = {"fingerprint_id": v.fingerprint_id, "device_id": v.device_id}
    out.update({n: getattr(v, n) for n in SCALAR_NAMES})
    out["ie_bitmap"] = v.ie_hex
    out["normalized"] = v.normalized
    return out


def _features_in(d: dict) -> FeatureVector:
    bitmap = d["ie_bitmap"]
    if not isinstance(bitmap, str) or len(bitmap) != 64:
        raise ValueError("ie_bitmap must be 64 hex characters")
    return FeatureVector(**{n: float(d[n]) for n in SCALAR_NAMES}, ie_bitmap=int(bitmap, 16),
                         normalized=_bool(d["normalized"]), fingerprint_id=str(d["fingerprint_id"]),
                         device_id=str(d["device_id"]))


def _model_out(m) -> dict:
    rec = m.to_record() if hasattr(m, "to_record") else m
    return {k: rec[k] for k in ("kind", "hyperparameters", "parameters", "training_meta")}


def _model_in(d: dict):
    from .learn import ClassifierModel
    return ClassifierModel.from_record(d)


def _int(x) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise ValueError(f"expected integer, got {x!r}")
    return x


def _bool(x) -> bool:
    if not isinstance(x, bool):
        raise ValueError(f"expected boolean, got {x!r}")
    return x


@dataclass(frozen=True)
class Schema:
    tag: str
    fields: tuple[str, ...]
    encode: Callable[[Any], dict]
    decode: Callable[[dict], Any]


SCHEMAS = {s.tag: s for s in [
    Schema("frames.v1", ("capture_id", "timestamp", "src", "dst", "subtype", "seq_num", "ies", "sanitized"),
           _frame_out, _frame_in),
    Schema("bursts.v1", ("capture_id", "mac", "index_within_mac", "start_time", "end_time", "frames"),
           _burst_out, _burst_in),
    Schema("groups.v1", ("pseudo_id", "device_id", "partial", "bursts"), _group_out, _group_in),
    Schema("fsm.v1", ("pseudo_id", "device_id", "states", "transitions", "initial", "duration",
                      "frame_count", "burst_count", "inter_burst_gaps", "seq_span", "start_time"),
           _fsm_out, _fsm_in),
    Schema("features.v1", ("fingerprint_id", "device_id", *SCALAR_NAMES, "ie_bitmap", "normalized"),
           _features_out, _features_in),
    Schema("model.v1", ("kind", "hyperparameters", "parameters", "training_meta"), _model_out, _model_in),
]}


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def write_records(path, schema_tag: str, records: Iterable, seed: int | None = None) -> None:
    """Atomically write ``records`` (typed objects of the schema) to ``path``."""
    if schema_tag not in SCHEMAS:
        raise SchemaError("one of " + ", ".join(SCHEMAS), schema_tag)
    schema = SCHEMAS[schema_tag]
    path = Path(path)
    lines = [_dumps({"schema": schema_tag, "producer": PRODUCER, "seed": seed})]
    lines.extend(_dumps(schema.encode(r)) for r in records)
    payload = ("\n".join(lines) + "\n").encode("utf-8")
    tmp = None
    try:
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        if tmp and os.path.exists(tmp):
            os.unlink(tmp)
        raise StorageError(path, str(exc)) from exc


def read_header(path) -> dict:
    try:
        with open(path, "rb") as fh:
            first = fh.readline()
    except OSError as exc:
        raise StorageError(path, str(exc)) from exc
    try:
        header = json.loads(first.decode("utf-8"))
        if not isinstance(header, dict) or not isinstance(header.get("schema"), str):
            raise ValueError("header has no schema tag")
    except (UnicodeDecodeError, ValueError) as exc:
        raise RecordParseError(path, 1, f"bad header: {exc}") from None
    return header


def read_records(path, expected_tag: str) -> list:
    """Validate header and every line of ``path``; return the typed records."""
    header = read_header(path)
    if header["schema"] != expected_tag:
        raise SchemaError(expected_tag, header["schema"])
    schema = SCHEMAS[expected_tag]
    with open(path, "rb") as fh:
        raw_lines = fh.read().split(b"\n")
    if raw_lines and raw_lines[-1] == b"":
        raw_lines.pop()
    out = []
    for lineno, raw in enumerate(raw_lines[1:], start=2):
        try:
            obj = json.loads(raw.decode("utf-8"))
            if not isinstance(obj, dict):
                raise ValueError("record is not an object")
            if tuple(obj) != schema.fields:
                raise ValueError(f"fields {sorted(obj)} do not match {expected_tag}")
            out.append(schema.decode(obj))
        except RecordParseError:
            raise
        except Exception as exc:  # any decoding failure is a parse error at this line
            raise RecordParseError(path, lineno, str(exc) or type(exc).__name__) from None
    return out


# --- resolving burst/group references against frames ------------------------

def frame_ordinals(frames: Sequence[ManagementFrame]) -> dict[int, tuple[str, int]]:
    """Map ``id(frame)`` to ``(capture_id, ordinal within capture)``."""
    counters: dict[str, int] = {}
    out = {}
    for f in frames:
        k = counters.get(f.capture_id, 0)
        out[id(f)] = (f.capture_id, k)
        counters[f.capture_id] = k + 1
    return out


def burst_refs(bursts: Sequence[Burst], frames: Sequence[ManagementFrame]) -> list[BurstRef]:
    ords = frame_ordinals(frames)
    return [BurstRef(b.capture_id, b.mac, b.index_within_mac, b.start_time, b.end_time,
                     tuple(ords[id(f)][1] for f in b.frames)) for b in bursts]


def resolve_bursts(refs: Sequence[BurstRef], frames: Sequence[ManagementFrame]) -> list[Burst]:
    by_capture: dict[str, list[ManagementFrame]] = {}
    for f in frames:
        by_capture.setdefault(f.capture_id, []).append(f)
    try:
        return [Burst(r.mac, tuple(by_capture[r.capture_id][k] for k in r.frames), r.index_within_mac, r.capture_id)
                for r in refs]
    except (KeyError, IndexError) as exc:
        raise SchemaError("burst references matching the frame file", f"dangling reference {exc}") from None


def group_refs(groups: Sequence[BurstGroup]) -> list[GroupRef]:
    return [GroupRef(g.pseudo_id, g.device_id, g.partial,
                     tuple((b.capture_id, b.mac, b.index_within_mac) for b in g.bursts)) for g in groups]


def resolve_groups(refs: Sequence[GroupRef], bursts: Sequence[Burst]) -> list[BurstGroup]:
    index = {(b.capture_id, b.mac, b.index_within_mac): b for b in bursts}
    try:
        return [BurstGroup(r.pseudo_id, r.device_id, tuple(index[k] for k in r.bursts), r.partial) for r in refs]
    except KeyError as exc:
        raise SchemaError("group references matching the burst file", f"dangling reference {exc}") from None
