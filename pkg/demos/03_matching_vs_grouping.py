"""Nearest-neighbour matching accuracy as more bursts go into each fingerprint.

Run: python3 demos/03_matching_vs_grouping.py
"""

from pathlib import Path

import wififsm
from wififsm.evalharness import ExperimentConfig, emit_report, run_sweep

DATA = Path(wififsm.__file__).parent / "data"

for fixture in ("separable.yaml", "classroom.yaml"):
    cfg = ExperimentConfig(profiles=DATA / fixture, P_values=[1, 2, 4, 10],
                           methods=["combined_distance", "euclidean", "cosine"], seeds=[0, 1])
    report = run_sweep(cfg)
    print(f"== {fixture}")
    print(emit_report(report, "plotdata").decode())
