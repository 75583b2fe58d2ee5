"""Split frames into bursts, group them, and look at the resulting state machines.

Run: python3 demos/02_bursts_and_fsms.py
"""

from pathlib import Path

import wififsm
from wififsm.featurize import fingerprint_groups
from wififsm.synthgen import generate_trace, load_profiles

DATA = Path(wififsm.__file__).parent / "data"

profiles, settings = load_profiles(DATA / "separable.yaml")
frames, truth = generate_trace(profiles, 1500.0, seed=2)
clients, excluded = wififsm.filter_clients(frames)
bursts = wififsm.segment_bursts(clients)
print(f"{len(clients)} client frames -> {len(bursts)} bursts ({len(excluded)} AP addresses dropped)")

for P in (1, 4):
    groups = wififsm.group_bursts(bursts, P, lambda b: truth.device_of(b.mac))
    fsms, vectors = fingerprint_groups([g for g in groups if not g.partial], seed=0)
    print(f"\nP={P}: {len(fsms)} complete groups")
    fsm, v, g = fsms[0], vectors[0], groups[0]
    print(f"  group {g.pseudo_id} of {g.device_id}: {fsm.frame_count} frames in {fsm.burst_count} bursts")
    for (a, b), count in sorted(fsm.transitions.items(), key=lambda kv: -kv[1])[:5]:
        print(f"    {a} -> {b}: {count}")
    print("  features x1..x7:", [round(float(x), 3) for x in v.scalars])
    print(f"  IE bitmap {v.ie_hex[:16]}...")

per_burst = [wififsm.build_fsm([b]) for b in groups[0].bursts]
merged = wififsm.merge_fsms(per_burst)
print("\nmerging per-burst machines reproduces the group's transition counts:",
      dict(merged.transitions) == dict(fsms[0].transitions))
