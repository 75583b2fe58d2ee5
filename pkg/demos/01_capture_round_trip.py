"""Generate a labelled capture, write it as a radiotap pcap and read it back.

Run: python3 demos/01_capture_round_trip.py
"""

from collections import Counter
from pathlib import Path

import wififsm
from wififsm.synthgen import generate_trace, load_profiles, write_capture

DATA = Path(wififsm.__file__).parent / "data"

profiles, settings = load_profiles(DATA / "separable.yaml")
frames, truth = generate_trace(profiles, 600.0, seed=1, capture_id="demo")
print(f"generated {len(frames)} management frames from {len(truth.device_profiles)} devices")

blob = write_capture(frames)
back = wififsm.parse_capture(blob, "demo")
print(f"pcap size {len(blob)} bytes, parsed {len(back)} frames, identical: {back == frames}")

print("subtype mix:", dict(Counter(f.subtype.name for f in back).most_common()))
randomized = {f.src for f in back if wififsm.is_randomized_mac(f.src)}
print(f"{len(randomized)} distinct randomized source addresses")

clean = wififsm.sanitize(back, b"demo-salt")
print("first frame before sanitizing:", back[0].src, f"t={back[0].timestamp:.6f}")
print("first frame after sanitizing: ", clean[0].src, f"t={clean[0].timestamp:.6f}")
