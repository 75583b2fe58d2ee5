"""Builders shared by the test modules."""

from pathlib import Path

import numpy as np

from wififsm.ingest import BROADCAST, FrameSubtype, InformationElement, MacAddress, ManagementFrame
from wififsm.synthgen import Distribution, VendorProfile
from wififsm.fsm import FsmState

DATA = Path(__file__).resolve().parents[1] / "src" / "wififsm" / "data"

AP = MacAddress.parse("00:1a:11:00:00:01")


def mac(i: int, local: bool = False) -> MacAddress:
    first = 0x02 if local else 0x3C
    return MacAddress(bytes([first, 0x22, 0xFB, (i >> 16) & 0xFF, (i >> 8) & 0xFF, i & 0xFF]))


def frame(t, src, subtype=FrameSubtype.PROBE_REQUEST, dst=BROADCAST, seq=0, tags=(), capture="c"):
    ies = tuple(InformationElement(tag, b"") for tag in tags)
    return ManagementFrame(timestamp=t, src=src, dst=dst, subtype=subtype, seq_num=seq, ies=ies,
                           capture_id=capture)


def simple_profile(name="va", *, fpb=(3, 8), intra=(0.01, 0.2), inter=(5.0, 20.0), bursts=10,
                   policy="persistent", personalization=0.0, probs=None, states=None, **kw):
    states = states or ["PROBE_REQUEST/B", "PROBE_REQUEST/U", "AUTHENTICATION/U"]
    k = len(states)
    if probs is None:
        probs = np.full((k, k), 1.0 / k)
    return VendorProfile(
        name=name,
        states=tuple(FsmState.parse(s) for s in states),
        transition_probs=np.asarray(probs, dtype=float),
        initial_state=FsmState.parse(states[0]),
        frames_per_burst=Distribution.uniform(*fpb) if isinstance(fpb, tuple) else Distribution.constant(fpb),
        intra_gap=Distribution.uniform(*intra) if isinstance(intra, tuple) else Distribution.constant(intra),
        inter_gap=Distribution.uniform(*inter) if isinstance(inter, tuple) else Distribution.constant(inter),
        bursts_per_device=Distribution.constant(bursts),
        ie_tags=kw.pop("ie_tags", {0: 1.0, 1: 1.0, 221: 0.5}),
        mac_policy=policy,
        personalization=personalization,
        **kw,
    )



ACCEPTANCE: list[str] = []


def verdict(number: int, title: str, ok: bool, detail: str) -> None:
    """Record and print one acceptance line, then fail the test if ``ok`` is false."""
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    assert ok, line
