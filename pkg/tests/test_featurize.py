import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import AP, frame, mac, simple_profile
from wififsm.burstseg import Burst, BurstGroup, group_bursts, segment_bursts
from wififsm.errors import ConfigurationError, ContractViolation
from wififsm.featurize import (DIM, SCALAR_NAMES, FeatureScaler, FeatureVector, extract_features, feature_matrix,
                               fingerprint_groups, ie_bitmap, normalize_features, tags_to_bitmap,
                               transition_entropy)
from wififsm.fsm import build_fsm
from wififsm.ingest import BROADCAST, FrameSubtype as S
from wififsm.synthgen import Distribution, generate_trace


def one_group(*bursts):
    return BurstGroup("g1", "dev", tuple(bursts))


def entropy_oracle(counts):
    total = sum(counts)
    h = 0.0
    for c in counts:
        if c:
            p = c / total
            h -= p * math.log2(p)
    return h


def test_entropy_examples():
    assert transition_entropy([2, 2]) == 1.0
    assert transition_entropy([5]) == 0.0
    assert transition_entropy([]) == 0.0


def test_feature_example_two_equiprobable_pairs():
    m = mac(1)
    fs = (frame(0, m), frame(0.1, m), frame(0.2, m), frame(0.3, m, subtype=S.AUTHENTICATION, dst=AP))
    # PB->PB, PB->PB, PB->AU ; add a second burst with PB->AU
    fs2 = (frame(5, m), frame(5.1, m, subtype=S.AUTHENTICATION, dst=AP))
    g = one_group(Burst(m, fs, 0), Burst(m, fs2, 1))
    v = extract_features(build_fsm(g), g)
    assert (v.x2_transitions, v.x3_self_transitions, v.x4_entropy) == (4, 2, 1.0)
    assert v.x1_states == 2
    assert v.x5_transition_rate == pytest.approx(4 / 5.1)
    assert v.x6_time_gap == pytest.approx(4.7)


def test_single_frame_degenerate_features():
    g = one_group(Burst(mac(1), (frame(0, mac(1), tags=(0,)),), 0))
    v = extract_features(build_fsm(g), g)
    assert v.scalars.tolist() == [1, 0, 0, 0, 0, 0, 0]


def test_x7_wraparound():
    m = mac(1)
    g = one_group(Burst(m, (frame(0, m, seq=4089), frame(0.1, m, seq=4090)), 0),
                  Burst(m, (frame(5, m, seq=6),), 1))
    assert extract_features(build_fsm(g), g).x7_seq_gap == 12


def test_x6_x7_zero_for_single_burst():
    m = mac(1)
    g = one_group(Burst(m, (frame(0, m, seq=10), frame(0.5, m, seq=900)), 0))
    v = extract_features(build_fsm(g), g)
    assert v.x6_time_gap == 0 and v.x7_seq_gap == 0


def test_ie_bitmap_examples():
    m = mac(1)
    g = one_group(Burst(m, (frame(0, m, tags=(0, 1, 50, 221)),), 0))
    bitmap = ie_bitmap(g, 7)
    arr = FeatureVector(*[0.0] * 7, ie_bitmap=bitmap).ie_flags
    assert np.flatnonzero(arr).tolist() == [0, 1, 50, 221] and arr.size == 256
    assert ie_bitmap(g, 7) == bitmap
    no_probe = one_group(Burst(m, (frame(0, m, subtype=S.AUTHENTICATION, dst=AP, tags=(3,)),), 0))
    assert ie_bitmap(no_probe, 1) == 0


def test_ie_bitmap_seeded_choice():
    m = mac(1)
    g = one_group(Burst(m, tuple(frame(0.1 * k, m, tags=(k,)) for k in range(8)), 0))
    picks = {ie_bitmap(g, s) for s in range(40)}
    assert len(picks) > 1
    assert all(bin(p).count("1") == 1 for p in picks)
    assert [ie_bitmap(g, s) for s in range(10)] == [ie_bitmap(g, s) for s in range(10)]


def test_tags_to_bitmap_rejects_out_of_range():
    with pytest.raises(ValueError):
        tags_to_bitmap([256])


def test_feature_matrix_layout():
    v = FeatureVector(1, 2, 3, 4, 5, 6, 7, ie_bitmap=tags_to_bitmap([0, 255]))
    X = feature_matrix([v, v])
    assert X.shape == (2, DIM) == (2, 263)
    assert X[0, :7].tolist() == [1, 2, 3, 4, 5, 6, 7]
    assert X[0, 7] == 1 and X[0, 7 + 255] == 1 and X[0, 7:].sum() == 2
    assert np.array_equal(X[0], v.as_array())


def vec(*xs, bits=0):
    return FeatureVector(*map(float, xs), ie_bitmap=bits)


def test_normalize_examples():
    out = normalize_features([vec(2, 5, 0, 0, 0, 0, 0, bits=3), vec(4, 5, 0, 0, 0, 0, 0, bits=1)])
    assert [v.x1_states for v in out] == [-1.0, 1.0]
    assert [v.x2_transitions for v in out] == [0.0, 0.0]
    assert [v.ie_bitmap for v in out] == [3, 1]
    assert all(v.normalized for v in out)


def test_normalize_needs_two_and_scaler_needs_fit():
    with pytest.raises(ConfigurationError):
        normalize_features([vec(1, 2, 3, 4, 5, 6, 7)])
    with pytest.raises(ContractViolation):
        FeatureScaler().transform([vec(1, 2, 3, 4, 5, 6, 7)])


def generator_vectors(seed=5, P=2):
    prof = simple_profile(policy="rotate_per_burst", seq_increment=Distribution.uniform(1, 4))
    frames, truth = generate_trace([(prof, 12)], 600.0, seed=seed)
    groups = group_bursts(segment_bursts(frames), P, lambda b: truth.device_of(b.mac))
    return groups, fingerprint_groups(groups, seed)


def test_normalized_columns_have_zero_mean_on_generator_output():
    _, (_, vectors) = generator_vectors()
    normed = normalize_features(vectors)
    cols = np.array([v.scalars for v in normed])
    assert np.all(np.abs(cols.mean(axis=0)) < 1e-9)
    std = cols.std(axis=0)
    assert np.all((np.abs(std - 1) < 1e-9) | (std == 0))
    again = normalize_features(normed)
    assert np.allclose(np.array([v.scalars for v in again]), cols, atol=1e-9)


def test_fingerprint_groups_is_deterministic_and_labelled():
    groups, (fsms, vectors) = generator_vectors()
    _, (_, vectors2) = generator_vectors()
    assert vectors == vectors2
    assert [v.fingerprint_id for v in vectors] == [g.pseudo_id for g in groups]
    assert [v.device_id for v in vectors] == [g.device_id for g in groups]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.tuples(st.sampled_from([S.PROBE_REQUEST, S.AUTHENTICATION, S.ACTION]),
                                   st.booleans(), st.integers(0, 4095),
                                   st.frozensets(st.integers(0, 255), max_size=6)),
                         min_size=1, max_size=7), min_size=1, max_size=5),
       st.integers(0, 2**32 - 1))
def test_feature_invariants(spec, seed):
    m, t, bursts = mac(1), 0.0, []
    for k, rows in enumerate(spec):
        fs = []
        for s, bcast, seq, tags in rows:
            fs.append(frame(t, m, subtype=s, dst=BROADCAST if bcast else AP, seq=seq, tags=sorted(tags)))
            t += 0.125
        bursts.append(Burst(m, tuple(fs), k))
        t += 2.5
    g = one_group(*bursts)
    fsm = build_fsm(g)
    v = extract_features(fsm, g, seed)
    assert v.x3_self_transitions <= v.x2_transitions
    # each burst is a connected walk, so it adds at most one state beyond its transitions
    assert v.x1_states <= v.x2_transitions + len(bursts)
    if v.x2_transitions > 0 and len(bursts) == 1:
        assert v.x1_states <= v.x2_transitions + 1
    pairs = len(fsm.transitions)
    assert 0 <= v.x4_entropy <= math.log2(max(1, pairs)) + 1e-12
    assert v.x4_entropy == pytest.approx(entropy_oracle(list(fsm.transitions.values())), abs=1e-12)
    if pairs <= 1:
        assert v.x4_entropy == 0
    if fsm.duration > 0:
        assert v.x5_transition_rate * fsm.duration == pytest.approx(v.x2_transitions, rel=1e-9)
    expected_x7 = max(((b2.frames[0].seq_num - b1.frames[-1].seq_num) % 4096
                       for b1, b2 in zip(bursts, bursts[1:])), default=0)
    assert v.x7_seq_gap == expected_x7
    probes = [f for f in g.frames if f.subtype == S.PROBE_REQUEST]
    n_bits = bin(v.ie_bitmap).count("1")
    assert n_bits in ({len(set(f.ie_tags)) for f in probes} or {0})
    assert transition_entropy(sorted(fsm.transitions.values())) == pytest.approx(v.x4_entropy, abs=1e-12)


def test_scalar_names_order():
    assert SCALAR_NAMES == ("x1_states", "x2_transitions", "x3_self_transitions", "x4_entropy",
                            "x5_transition_rate", "x6_time_gap", "x7_seq_gap")
