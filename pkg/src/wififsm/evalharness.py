"""End-to-end experiment sweeps over grouping size, method and seed.

A sweep runs ingest -> client filter -> segmentation -> grouping(P) -> FSM ->
features -> normalization -> method for every (P, method, seed) cell and
collects one accuracy row per cell.
"""

from __future__ import annotations

import csv
import io
import math
import statistics
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import yaml

from . import baselines, learn
from .burstseg import BurstGroup, filter_clients, group_bursts, persistent_device_map, segment_bursts
from .errors import ConfigurationError, StageError, WifiFsmError
from .featurize import feature_matrix, fingerprint_groups, normalize_features
from .ingest import load_oui_table, read_capture
from .similarity import COMBINED, METRICS, all_matrices, combined_matrix, distance_matrix, nearest_neighbor_match
from .synthgen import generate_trace, load_profiles, profiles_from_config

DISTANCE_METHODS = {"combined_distance": COMBINED, "euclidean": "euclidean",
                    "manhattan": "manhattan", "cosine": "cosine"}
CLASSIFIER_METHODS = {"rf": "random_forest", "lr": "logistic_regression", "svm": "svm_rbf"}
BASELINE_METHODS = {"ie_baseline": "ie", "seq_baseline": "seq", "fsm_discrimination": "fsm"}
METHODS = (*DISTANCE_METHODS, *CLASSIFIER_METHODS, *BASELINE_METHODS)

ROW_FIELDS = ("method", "P", "environment", "accuracy", "n_fingerprints", "seed", "wall_time")


@dataclass
class ExperimentConfig:
    """One sweep. Exactly one of ``pcap`` or ``profiles`` names the input.

    ``profiles`` is a profile-file path or an already-parsed profile document;
    the trace is regenerated from it for every seed.
    """

    pcap: str | Path | None = None
    profiles: str | Path | Mapping | None = None
    duration: float | None = None
    P_values: Sequence[int] = (1,)
    methods: Sequence[str] = ("combined_distance",)
    tau: float = 600.0
    samples: int = 1000
    seeds: Sequence[int] = (0,)
    out_dir: str | Path | None = None
    include_partial: bool = False
    environment: str | None = None
    oui: str | Path | None = None
    enable_svm: bool = False

    def __post_init__(self):
        if (self.pcap is None) == (self.profiles is None):
            raise ConfigurationError("set exactly one input source: pcap or profiles")
        self.P_values = tuple(self.P_values)
        self.methods = tuple(self.methods)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.P_values or any(not isinstance(p, int) or isinstance(p, bool) or p < 1
                                    for p in self.P_values):
            raise ConfigurationError(f"P values must be integers >= 1, got {self.P_values}")
        if not self.methods:
            raise ConfigurationError("at least one method is required")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigurationError(f"unknown method(s) {unknown}; choose from {list(METHODS)}")
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        if self.tau < 0 or self.samples < 1:
            raise ConfigurationError("tau must be >= 0 and samples >= 1")

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        """Read a YAML config; relative paths resolve against the config's directory."""
        path = Path(path)
        try:
            doc = yaml.safe_load(path.read_text(encoding="utf-8"))
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigurationError(f"cannot read experiment config {path}: {exc}") from None
        if not isinstance(doc, Mapping):
            raise ConfigurationError(f"{path}: experiment config must be a mapping")
        base = path.parent

        def rel(value):
            if value is None or isinstance(value, Mapping):
                return value
            p = Path(value)
            return p if p.is_absolute() else base / p

        known = {"pcap", "profiles", "duration", "P", "methods", "tau", "samples", "seeds", "out",
                 "include_partial", "environment", "oui", "enable_svm"}
        extra = set(doc) - known
        if extra:
            raise ConfigurationError(f"{path}: unknown keys {sorted(extra)}")
        return cls(pcap=rel(doc.get("pcap")), profiles=rel(doc.get("profiles")),
                   duration=doc.get("duration"), P_values=doc.get("P", [1]),
                   methods=doc.get("methods", ["combined_distance"]), tau=float(doc.get("tau", 600.0)),
                   samples=int(doc.get("samples", 1000)), seeds=doc.get("seeds", [0]),
                   out_dir=rel(doc.get("out")), include_partial=bool(doc.get("include_partial", False)),
                   environment=doc.get("environment"), oui=rel(doc.get("oui")),
                   enable_svm=bool(doc.get("enable_svm", False)))


@dataclass(frozen=True)
class ReportRow:
    method: str
    P: int
    environment: str
    accuracy: float
    n_fingerprints: int
    seed: int
    wall_time: float


@dataclass
class ExperimentReport:
    rows: list[ReportRow] = field(default_factory=list)

    def accuracy_rows(self) -> list[tuple]:
        """Rows without timing, the part that is reproducible bit for bit."""
        return [(r.method, r.P, r.environment, r.accuracy, r.n_fingerprints, r.seed) for r in self.rows]

    def mean_accuracy(self, method: str) -> dict[int, float]:
        acc = defaultdict(list)
        for r in self.rows:
            if r.method == method:
                acc[r.P].append(r.accuracy)
        return {P: float(np.mean(v)) for P, v in sorted(acc.items())}


def _stage(name: str, fn: Callable, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except (WifiFsmError, ValueError, KeyError, OSError) as exc:
        raise StageError(name, exc) from exc


@dataclass
class _Source:
    """Client bursts of one input plus their device labelling."""

    bursts: list
    device_of: Callable
    environment: str


def _load_source(cfg: ExperimentConfig, seed: int) -> _Source:
    if cfg.pcap is not None:
        oui = _stage("ingest", load_oui_table, cfg.oui) if cfg.oui else frozenset()
        frames, _ = _stage("ingest", read_capture, cfg.pcap)
        clients, _ = _stage("filter", filter_clients, frames)
        bursts = _stage("segment", segment_bursts, clients)
        mapping = persistent_device_map(bursts, oui)
        return _Source(bursts, lambda b: mapping[b.mac], cfg.environment or Path(cfg.pcap).name)

    if isinstance(cfg.profiles, Mapping):
        profiles, settings = _stage("ingest", profiles_from_config, cfg.profiles)
        default_env = "profiles"
    else:
        profiles, settings = _stage("ingest", load_profiles, cfg.profiles)
        default_env = Path(cfg.profiles).stem
    duration = cfg.duration or settings.get("duration")
    if duration is None:
        raise StageError("ingest", ConfigurationError("no trace duration in config or profile file"))
    frames, truth = _stage("ingest", generate_trace, profiles, float(duration), seed)
    clients, _ = _stage("filter", filter_clients, frames)
    bursts = _stage("segment", segment_bursts, clients)
    env = cfg.environment or settings.get("environment") or default_env
    return _Source(bursts, lambda b: truth.device_of(b.mac), str(env))


def _run_method(method: str, groups: list[BurstGroup], cfg: ExperimentConfig, seed: int, P: int) -> float:
    fsms_vectors = _stage("fsm", fingerprint_groups, groups, seed)
    vectors = fsms_vectors[1]
    if method in CLASSIFIER_METHODS:
        _, ev = _stage("learn", learn.classifier_experiment, vectors, CLASSIFIER_METHODS[method],
                       seed=seed, enable_svm=cfg.enable_svm, p=P)
        return ev.accuracy
    normalized = _stage("normalize", normalize_features, vectors)
    if method in DISTANCE_METHODS:
        metric = DISTANCE_METHODS[method]
        if metric == COMBINED:
            matrix = _stage("match", lambda: combined_matrix(all_matrices(normalized)))
        else:
            matrix = _stage("match", distance_matrix, normalized, metric)
        result = _stage("match", nearest_neighbor_match, matrix, [v.device_id for v in normalized])
        return _stage("match", lambda: result.accuracy)
    events = baselines.probe_events(groups)
    distance = None
    if method == "fsm_discrimination":
        distance = _stage("match", lambda: combined_matrix(all_matrices(normalized)).values)
    return _stage("baseline", baselines.discrimination_accuracy, events, BASELINE_METHODS[method],
                  cfg.samples, cfg.tau, seed, distance)


def run_sweep(config: ExperimentConfig) -> ExperimentReport:
    """Evaluate every (P, method, seed) cell; rows are ordered by (method, P, seed)."""
    cells = []
    for seed in config.seeds:
        source = _load_source(config, seed)
        for P in config.P_values:
            groups = _stage("group", group_bursts, source.bursts, P, source.device_of)
            if not config.include_partial:
                groups = [g for g in groups if not g.partial]
            for method in config.methods:
                start = time.perf_counter()
                acc = _run_method(method, groups, config, seed, P)
                cells.append(ReportRow(method, P, source.environment, float(acc), len(groups), seed,
                                       time.perf_counter() - start))
    order = {m: k for k, m in enumerate(config.methods)}
    cells.sort(key=lambda r: (order[r.method], r.P, r.seed))
    report = ExperimentReport(cells)
    if config.out_dir is not None:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_bytes(emit_report(report, "csv"))
        (out / "plotdata.csv").write_bytes(emit_report(report, "plotdata"))
    return report


def _plot_series(report: ExperimentReport):
    cells = defaultdict(list)
    for r in report.rows:
        cells[(r.method, r.environment, r.P)].append(r.accuracy)
    for (method, env, P), accs in cells.items():
        sd = statistics.stdev(accs) if len(accs) > 1 else 0.0
        yield method, env, P, statistics.fmean(accs), sd, len(accs)


def emit_report(report: ExperimentReport, fmt: str = "csv") -> bytes:
    """Serialize a report as ``csv`` (raw rows), ``table`` (aligned text grouped by
    method) or ``plotdata`` (per method and environment: P, mean accuracy, sample
    standard deviation over seeds)."""
    if not report.rows:
        raise ConfigurationError("cannot emit an empty report")
    buf = io.StringIO()
    if fmt == "csv":
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ROW_FIELDS)
        for r in report.rows:
            w.writerow([r.method, r.P, r.environment, repr(r.accuracy), r.n_fingerprints, r.seed,
                        f"{r.wall_time:.6f}"])
    elif fmt == "plotdata":
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "environment", "P", "mean_accuracy", "stdev", "n_seeds"])
        for method, env, P, mean, sd, n in _plot_series(report):
            w.writerow([method, env, P, repr(mean), repr(sd), n])
    elif fmt == "table":
        by_method = defaultdict(list)
        for r in report.rows:
            by_method[r.method].append(r)
        header = ("P", "environment", "seed", "accuracy", "n_fp", "wall_s")
        for method, rows in by_method.items():
            mean = statistics.fmean(r.accuracy for r in rows)
            buf.write(f"{method}  ({len(rows)} rows, mean accuracy {mean:.4f})\n")
            body = [(str(r.P), r.environment, str(r.seed), f"{r.accuracy:.4f}", str(r.n_fingerprints),
                     f"{r.wall_time:.3f}") for r in rows]
            widths = [max(len(h), *(len(b[k]) for b in body)) for k, h in enumerate(header)]
            buf.write("  " + "  ".join(h.rjust(wd) for h, wd in zip(header, widths)) + "\n")
            for b in body:
                buf.write("  " + "  ".join(c.rjust(wd) for c, wd in zip(b, widths)) + "\n")
    else:
        raise ConfigurationError(f"unknown report format {fmt!r}; use csv, table or plotdata")
    return buf.getvalue().encode("utf-8")


def read_report_csv(data: bytes | str) -> ExperimentReport:
    """Inverse of ``emit_report(..., 'csv')``."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    rows = []
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != ROW_FIELDS:
        raise ConfigurationError(f"report CSV must have columns {ROW_FIELDS}")
    for rec in reader:
        try:
            rows.append(ReportRow(rec["method"], int(rec["P"]), rec["environment"], float(rec["accuracy"]),
                                  int(rec["n_fingerprints"]), int(rec["seed"]), float(rec["wall_time"])))
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad report row {rec}: {exc}") from None
    return ExperimentReport(rows)
