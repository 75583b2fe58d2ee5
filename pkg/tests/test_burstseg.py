import math

import pytest
from hypothesis import given, settings, strategies as st

from helpers import AP, DATA, frame, mac, simple_profile
from wififsm.burstseg import (UNKNOWN_DEVICE, Burst, filter_clients, group_bursts, persistent_device_map,
                              segment_bursts)
from wififsm.errors import ConfigurationError
from wififsm.ingest import FrameSubtype, MacAddress
from wififsm.synthgen import generate_trace, load_profiles


def oracle_partition(frames, gap_us=1_000_000):
    """Quadratic reference: for each MAC, scan its time-sorted integer timestamps
    and cut wherever the distance to the previous frame exceeds ``gap_us``."""
    out = {}
    for m in {f.src for f in frames}:
        mine = [f for f in frames if f.src == m]
        # stable selection sort by timestamp
        ordered = []
        remaining = list(mine)
        while remaining:
            best = remaining[0]
            for f in remaining:
                if f.timestamp < best.timestamp:
                    best = f
            ordered.append(best)
            remaining.remove(best)
        runs = []
        for f in ordered:
            t = round(f.timestamp * 1_000_000)
            if runs and t - round(runs[-1][-1].timestamp * 1_000_000) <= gap_us:
                runs[-1].append(f)
            else:
                runs.append([f])
        out[m] = [[id(f) for f in r] for r in runs]
    return out


def as_partition(bursts):
    out = {}
    for b in sorted(bursts, key=lambda b: b.index_within_mac):
        out.setdefault(b.mac, []).append([id(f) for f in b.frames])
    return out


def test_filter_clients_drops_every_frame_of_ap_macs():
    a, b = mac(1), mac(2)
    frames = [frame(0, a), frame(1, a, subtype=FrameSubtype.BEACON), frame(2, a), frame(3, b), frame(4, b)]
    clients, excluded = filter_clients(frames)
    assert excluded == {a}
    assert clients == frames[3:]


def test_filter_clients_association_response():
    frames = [frame(0, AP, subtype=FrameSubtype.ASSOCIATION_RESPONSE, dst=mac(1)), frame(0.1, mac(1))]
    clients, excluded = filter_clients(frames)
    assert excluded == {AP} and clients == frames[1:]


def test_filter_clients_removes_exactly_265_access_points():
    profiles, settings_ = load_profiles(DATA / "access_points.yaml")
    frames, truth = generate_trace(profiles, settings_["duration"], seed=3)
    aps = {m for m, d in truth.mac_devices.items() if truth.device_profiles[d] == "ap"}
    assert len(aps) == 265
    clients, excluded = filter_clients(frames)
    assert excluded == aps
    assert all(truth.device_profiles[truth.device_of(f.src)] == "client" for f in clients)
    assert len(clients) == sum(1 for d in truth.frame_devices if truth.device_profiles[d] == "client")


def test_segment_boundary_is_inclusive():
    a = mac(1)
    bursts = segment_bursts([frame(t, a) for t in (0, 0.5, 1.0, 2.5)])
    assert [[f.timestamp for f in b.frames] for b in bursts] == [[0, 0.5, 1.0], [2.5]]
    assert [b.index_within_mac for b in bursts] == [0, 1]


def test_segment_single_frame_and_exact_boundary_after_offset():
    a = mac(1)
    assert len(segment_bursts([frame(7.0, a)])) == 1
    # 1.000000 s apart after a large epoch offset still counts as inside
    bursts = segment_bursts([frame(1700000000.123456, a), frame(1700000001.123456, a)])
    assert len(bursts) == 1


def test_segment_rejects_nonpositive_gap():
    with pytest.raises(ConfigurationError):
        segment_bursts([frame(0, mac(1))], gap=0)


def test_segment_keys_by_capture():
    a = mac(1)
    bursts = segment_bursts([frame(0, a, capture="x"), frame(0.5, a, capture="y")])
    assert sorted(b.capture_id for b in bursts) == ["x", "y"]


def test_segment_output_order_and_ties():
    a, b = mac(1), mac(2)
    f1, f2, f3 = frame(1.0, b, seq=1), frame(1.0, b, seq=2), frame(0.5, a)
    bursts = segment_bursts([f1, f2, f3])
    assert [x.mac for x in bursts] == [a, b]
    assert bursts[1].frames == (f1, f2)


trace = st.lists(st.tuples(st.integers(0, 30_000_000), st.integers(0, 2)), min_size=1, max_size=200)


@settings(max_examples=60, deadline=None)
@given(trace)
def test_segment_matches_quadratic_oracle(rows):
    frames = [frame(t / 1_000_000, mac(m), seq=k % 4096) for k, (t, m) in enumerate(rows)]
    bursts = segment_bursts(frames)
    assert as_partition(bursts) == oracle_partition(frames)


@settings(max_examples=60, deadline=None)
@given(trace)
def test_segment_partition_and_gap_properties(rows):
    frames = sorted((frame(t / 1_000_000, mac(m), seq=k % 4096) for k, (t, m) in enumerate(rows)),
                    key=lambda f: f.timestamp)
    bursts = segment_bursts(frames)
    per_mac = {}
    for b in sorted(bursts, key=lambda b: b.index_within_mac):
        assert all(f.src == b.mac for f in b.frames)
        assert all(y.timestamp - x.timestamp <= 1.0 + 1e-9 for x, y in zip(b.frames, b.frames[1:]))
        assert b.start_time == b.frames[0].timestamp and b.end_time == b.frames[-1].timestamp
        per_mac.setdefault(b.mac, []).append(b)
    for m, bs in per_mac.items():
        assert [f for b in bs for f in b.frames] == [f for f in frames if f.src == m]
        assert all(nxt.start_time - cur.end_time > 1.0 for cur, nxt in zip(bs, bs[1:]))


def bursts_of(n, m=None, start=0.0):
    m = m or mac(1)
    return segment_bursts([frame(start + 10 * k, m) for k in range(n)])


def test_group_sizes_with_partial_tail():
    bursts = bursts_of(7)
    groups = group_bursts(bursts, 3, {mac(1): "d"})
    assert [len(g.bursts) for g in groups] == [3, 3, 1]
    assert [g.partial for g in groups] == [False, False, True]


def test_group_p1_and_infinity():
    bursts = bursts_of(4)
    assert len(group_bursts(bursts, 1, {mac(1): "d"})) == 4
    for p in (None, math.inf):
        (g,) = group_bursts(bursts, p, {mac(1): "d"})
        assert len(g.bursts) == 4 and not g.partial


def test_group_rejects_bad_p_and_missing_device():
    with pytest.raises(ConfigurationError):
        group_bursts(bursts_of(2), 0, {mac(1): "d"})
    with pytest.raises(ConfigurationError):
        group_bursts(bursts_of(2), 2, {})


def test_group_p10_over_generator_25_bursts():
    prof = simple_profile(bursts=25, policy="rotate_per_burst", inter=(2.0, 4.0))
    frames, truth = generate_trace([(prof, 6)], 1000.0, seed=2)
    groups = group_bursts(segment_bursts(frames), 10, lambda b: truth.device_of(b.mac))
    by_device = {}
    for g in groups:
        by_device.setdefault(g.device_id, []).append(g)
    assert len(by_device) == 6
    for gs in by_device.values():
        assert [len(g.bursts) for g in gs] == [10, 10, 5]
        assert [g.partial for g in gs] == [False, False, True]
    assert len({g.pseudo_id for g in groups}) == len(groups)


def test_unknown_devices_group_per_mac():
    a, b = mac(1, local=True), mac(2, local=True)
    bursts = segment_bursts([frame(0, a), frame(5, b), frame(10, a)])
    dmap = persistent_device_map(bursts)
    assert set(dmap.values()) == {UNKNOWN_DEVICE}
    groups = group_bursts(bursts, None, dmap)
    assert sorted(len(g.bursts) for g in groups) == [1, 2]
    assert all({x.mac for x in g.bursts} in ({a}, {b}) for g in groups)


def test_persistent_map_uses_oui_table():
    m = MacAddress.parse("3c:22:fb:00:00:09")
    bursts = segment_bursts([frame(0, m)])
    assert persistent_device_map(bursts) == {m: str(m)}
    assert persistent_device_map(bursts, frozenset({b"\x00\x00\x01"})) == {m: UNKNOWN_DEVICE}


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(1, 6)), min_size=1, max_size=12), st.integers(1, 5))
def test_group_properties(spec_rows, P):
    frames, t = [], 0.0
    for m, n in spec_rows:
        for _ in range(n):
            frames.append(frame(t, mac(m)))
            t += 3.0
    bursts = segment_bursts(frames)
    device = {mac(k): f"dev{k % 2}" for k in range(4)}
    groups = group_bursts(bursts, P, device)
    assert len({g.pseudo_id for g in groups}) == len(groups)
    assert sorted(id(b) for g in groups for b in g.bursts) == sorted(id(b) for b in bursts)
    for g in groups:
        assert 1 <= len(g.bursts) <= P
        assert {device[b.mac] for b in g.bursts} == {g.device_id}
        assert g.partial == (len(g.bursts) < P)
        assert list(g.bursts) == sorted(g.bursts, key=lambda b: b.start_time)
    for d in set(device.values()):
        assert sum(g.partial for g in groups if g.device_id == d) <= 1


def test_burst_len():
    b = Burst(mac(1), (frame(0, mac(1)), frame(0.1, mac(1))), 0)
    assert len(b) == 2
