import struct
from collections import Counter, defaultdict

import numpy as np
import pytest
import yaml
from hypothesis import given, settings, strategies as st

from helpers import DATA, simple_profile
from wififsm.burstseg import filter_clients, segment_bursts
from wififsm.errors import ConfigurationError, FormatError
from wififsm.fsm import FsmState
from wififsm.ingest import FrameSubtype, InformationElement, ManagementFrame, is_randomized_mac, parse_capture
from wififsm.synthgen import (Distribution, VendorProfile, generate_trace, load_profiles, profiles_from_config,
                              read_ground_truth_csv, save_capture, write_capture)

FIXTURES = ["separable.yaml", "overlapping.yaml", "classroom.yaml", "public_square.yaml", "access_points.yaml"]


def test_one_burst_with_constant_gaps():
    prof = simple_profile(fpb=3, intra=0.5, bursts=1)
    frames, truth = generate_trace([(prof, 1)], 100.0, seed=1)
    t0 = frames[0].timestamp
    assert [f.timestamp - t0 for f in frames] == pytest.approx([0.0, 0.5, 1.0])
    assert len(segment_bursts(frames)) == 1
    assert truth.frame_devices == ["va-000"] * 3


def test_rotate_per_burst_gives_fresh_randomized_macs():
    prof = simple_profile(bursts=4, policy="rotate_per_burst")
    frames, _ = generate_trace([(prof, 1)], 1000.0, seed=2)
    macs = {f.src for f in frames}
    assert len(macs) == 4
    assert all(m.is_locally_administered and is_randomized_mac(m, frozenset()) for m in macs)


def test_rotate_every_k_bursts():
    prof = simple_profile(bursts=7, policy="rotate_per_k_bursts", rotate_k=3)
    frames, _ = generate_trace([(prof, 1)], 1000.0, seed=2)
    assert len({f.src for f in frames}) == 3


def test_persistent_mac_uses_vendor_oui():
    prof = simple_profile(bursts=3, oui=b"\xac\xbc\x32")
    frames, _ = generate_trace([(prof, 2)], 1000.0, seed=2)
    assert {f.src.octets[:3] for f in frames} == {b"\xac\xbc\x32"}
    assert len({f.src for f in frames}) == 2


def test_transition_frequencies_within_three_percent_tv():
    probs = np.array([[0.6, 0.3, 0.1], [0.2, 0.2, 0.6], [0.45, 0.1, 0.45]])
    prof = simple_profile(probs=probs, fpb=(8, 12), bursts=30, inter=(2.0, 3.0))
    frames, _ = generate_trace([(prof, 40)], 10_000.0, seed=5)
    counts = defaultdict(Counter)
    for b in segment_bursts(frames):
        states = [FsmState.of(f) for f in b.frames]
        for a, c in zip(states, states[1:]):
            counts[a][c] += 1
    total = sum(sum(c.values()) for c in counts.values())
    assert total >= 10_000
    for i, s in enumerate(prof.states):
        row = counts[s]
        n = sum(row.values())
        tv = 0.5 * sum(abs(row[t] / n - probs[i, j]) for j, t in enumerate(prof.states))
        assert tv <= 0.03, (s, tv)


def test_segmentation_recovers_generated_bursts():
    prof = simple_profile(policy="rotate_per_k_bursts", rotate_k=2, bursts=12)
    frames, truth = generate_trace([(prof, 10)], 2000.0, seed=8)
    found = defaultdict(list)
    for b in segment_bursts(frames):
        found[truth.device_of(b.mac)].append((b.start_time, b.end_time, len(b)))
    for device, bursts in truth.device_bursts.items():
        assert sorted(found[device]) == pytest.approx(sorted(bursts))
    assert len(truth.frame_devices) == len(frames)


def test_seed_determinism_is_byte_level():
    prof = simple_profile(policy="rotate_per_burst")
    a = write_capture(generate_trace([(prof, 4)], 300.0, seed=3)[0])
    b = write_capture(generate_trace([(prof, 4)], 300.0, seed=3)[0])
    c = write_capture(generate_trace([(prof, 4)], 300.0, seed=4)[0])
    assert a == b != c


def test_empty_capture_is_header_only():
    data = write_capture([])
    assert len(data) == 24
    magic, major, minor, _, _, _, linktype = struct.unpack("<IHHiIII", data)
    assert (magic, major, minor, linktype) == (0xA1B2C3D4, 2, 4, 105)
    assert parse_capture(data) == []


def test_timestamps_floor_to_microseconds():
    f = ManagementFrame(0.0000015, __import__("helpers").mac(1), __import__("helpers").AP,
                        FrameSubtype.AUTHENTICATION, 0, (), "c")
    data = write_capture([f])
    sec, usec = struct.unpack("<II", data[24:32])
    assert (sec, usec) == (0, 1)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_round_trip_any_seed(seed):
    prof = simple_profile(policy="rotate_per_burst", bursts=4)
    ap = simple_profile("apv", states=["BEACON/B", "PROBE_RESPONSE/U"], is_ap=True, bursts=2, oui=b"\x00\x1a\x11")
    frames, _ = generate_trace([(prof, 3), (ap, 1)], 200.0, seed=seed, capture_id="x")
    assert parse_capture(write_capture(frames), "x") == frames


def test_ap_profiles_emit_beacons_and_are_filtered():
    ap = simple_profile("apv", states=["BEACON/B", "PROBE_RESPONSE/U"], is_ap=True, bursts=3, oui=b"\x00\x1a\x11")
    frames, truth = generate_trace([(simple_profile(), 2), (ap, 2)], 500.0, seed=1)
    assert any(f.subtype is FrameSubtype.BEACON for f in frames)
    clients, excluded = filter_clients(frames)
    assert {truth.device_of(m) for m in excluded} == {"apv-000", "apv-001"}
    assert all(truth.device_of(f.src).startswith("va") for f in clients)


def test_probe_requests_carry_configured_ies():
    prof = simple_profile(ie_tags={0: 1.0, 45: 1.0, 221: 0.0})
    frames, _ = generate_trace([(prof, 2)], 300.0, seed=0)
    probes = [f for f in frames if f.subtype is FrameSubtype.PROBE_REQUEST]
    assert probes and all(f.ie_tags == {0, 45} for f in probes)
    assert all(ie == InformationElement(0, b"") for f in probes for ie in f.ies if ie.tag == 0)


@pytest.mark.parametrize("bad", [
    dict(probs=[[0.5, 0.5, 0.1], [0.3, 0.3, 0.4], [0.3, 0.3, 0.4]]),
    dict(intra=(0.5, 1.5)),
    dict(inter=(1.0, 3.0)),
    dict(policy="teleport"),
    dict(personalization=1.0),
    dict(oui=b"\x02\x00\x00"),
])
def test_invalid_profiles_rejected(bad):
    with pytest.raises(ConfigurationError):
        simple_profile(**bad)


def test_generate_trace_argument_errors():
    with pytest.raises(ConfigurationError):
        generate_trace([], 10.0)
    with pytest.raises(ConfigurationError):
        generate_trace([(simple_profile(), 1)], 0.0)
    with pytest.raises(ConfigurationError):
        generate_trace([(simple_profile(), 1), (simple_profile(), 1)], 10.0)


@pytest.mark.parametrize("name", FIXTURES)
def test_shipped_fixtures_load(name):
    profiles, settings_ = load_profiles(DATA / name)
    assert profiles and settings_["duration"] > 0
    for prof, count in profiles:
        assert count >= 1
        assert np.allclose(prof.transition_probs.sum(axis=1), 1.0, atol=1e-9)


def test_profile_config_round_trip_and_schema():
    prof = simple_profile(seq_increment=Distribution("truncexp", 1, 9, 2.0))
    doc = {"schema": "wififsm-profiles/1", "profiles": [{**prof.to_config(), "count": 2}], "duration": 5}
    [(back, count)], settings_ = profiles_from_config(yaml.safe_load(yaml.safe_dump(doc)))
    assert count == 2 and settings_ == {"duration": 5}
    assert back.to_config() == prof.to_config()
    with pytest.raises(ConfigurationError):
        profiles_from_config({"profiles": []})
    with pytest.raises(ConfigurationError):
        profiles_from_config({"schema": "wififsm-profiles/1", "profiles": [{"name": "x"}]})


def test_distributions():
    rng = np.random.default_rng(0)
    d = Distribution("truncexp", 2.0, 6.0, 1.5)
    xs = np.array([d.sample(rng) for _ in range(20000)])
    assert xs.min() >= 2.0 and xs.max() <= 6.0
    assert xs.mean() == pytest.approx(d.mean(), rel=0.02)
    ints = np.array([d.sample_int(rng) for _ in range(20000)])
    assert ints.mean() == pytest.approx(d.mean(integer=True), rel=0.02)
    u = Distribution.uniform(2, 6)
    assert {u.sample_int(rng) for _ in range(500)} == {2, 3, 4, 5, 6}
    narrow = u.narrowed(rng, 0.25)
    assert 2 <= narrow.low and narrow.high <= 6 and narrow.high - narrow.low == pytest.approx(1.0)
    with pytest.raises(ConfigurationError):
        Distribution.uniform(3, 1)


def test_ground_truth_csv_round_trip(tmp_path):
    frames, truth = generate_trace([(simple_profile(), 3)], 200.0, seed=1)
    path = tmp_path / "gt.csv"
    truth.write_csv(path)
    devices, profiles = read_ground_truth_csv(path)
    assert devices == truth.frame_devices
    assert profiles == truth.device_profiles
    path.write_text("frame_ordinal,device_id,profile\n0,a,b\n2,a,b\n")
    with pytest.raises(FormatError):
        read_ground_truth_csv(path)


def test_save_capture(tmp_path):
    frames, _ = generate_trace([(simple_profile(), 1)], 100.0, seed=0)
    save_capture(tmp_path / "t.pcap", frames)
    assert (tmp_path / "t.pcap").read_bytes() == write_capture(frames)


def test_profile_defaults_keep_sequence_cumulative():
    prof = simple_profile(policy="rotate_per_burst", bursts=6, fpb=2)
    assert isinstance(prof, VendorProfile) and not prof.seq_reset_on_rotate
    frames, _ = generate_trace([(prof, 1)], 1000.0, seed=3)
    seqs = [f.seq_num for f in frames]
    assert all((b - a) % 4096 == 1 for a, b in zip(seqs, seqs[1:]))
