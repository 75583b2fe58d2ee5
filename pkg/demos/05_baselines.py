"""Associate probe requests across rotating addresses with three rules.

The IE rule picks the most similar IE set, the sequence rule the smallest
forward sequence-number gap, and the FSM rule the closest fingerprint.

Run: python3 demos/05_baselines.py
"""

from pathlib import Path

import wififsm
from wififsm.baselines import discrimination_accuracy, probe_events
from wififsm.featurize import fingerprint_groups
from wififsm.similarity import all_matrices
from wififsm.synthgen import generate_trace, load_profiles

DATA = Path(wififsm.__file__).parent / "data"

profiles, settings = load_profiles(DATA / "separable.yaml")
frames, truth = generate_trace(profiles, settings["duration"], seed=0)
bursts = wififsm.segment_bursts(wififsm.filter_clients(frames)[0])
groups = wififsm.group_bursts(bursts, 1, lambda b: truth.device_of(b.mac))
_, vectors = fingerprint_groups(groups, seed=0)
distance = wififsm.combined_matrix(all_matrices(wififsm.normalize_features(vectors))).values
events = probe_events(groups)
print(f"{len(events)} probe events, one rotating address per burst")

for tau in (60.0, 600.0):
    scores = {m: discrimination_accuracy(events, m, 1000, tau, seed=0, distance=distance)
              for m in ("ie", "seq", "fsm")}
    print(f"tau={tau:>5.0f}s  " + "  ".join(f"{m}={a:.3f}" for m, a in scores.items()))
