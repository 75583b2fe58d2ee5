"""Train the pair classifiers on fingerprints from vendors whose behaviour overlaps.

Run: python3 demos/04_pair_classifiers.py
"""

from pathlib import Path

import wififsm
from wififsm.featurize import fingerprint_groups
from wififsm.learn import classifier_experiment, match_with_model
from wififsm.synthgen import generate_trace, load_profiles

DATA = Path(wififsm.__file__).parent / "data"

profiles, settings = load_profiles(DATA / "overlapping.yaml")
frames, truth = generate_trace(profiles, settings["duration"], seed=0)
bursts = wififsm.segment_bursts(wififsm.filter_clients(frames)[0])
groups = wififsm.group_bursts(bursts, 1, lambda b: truth.device_of(b.mac))
_, vectors = fingerprint_groups(groups, seed=0)
print(f"{len(vectors)} single-burst fingerprints from {len(set(v.device_id for v in vectors))} devices")

for kind in ("lr", "rf"):
    model, result = classifier_experiment(vectors, kind, seed=0)
    print(f"{kind}: pair accuracy {result.accuracy:.3f} (tp={result.tp} fp={result.fp} "
          f"tn={result.tn} fn={result.fn})")

scaled = wififsm.normalize_features(vectors)
match = match_with_model(model, scaled)
print(f"matching by forest score over all fingerprints: {match.accuracy:.3f}")
