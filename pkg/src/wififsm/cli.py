"""Command-line front end: ``wififsm [--seed N] [--out DIR] [--oui FILE] <command> ...``.

Each stage reads its inputs from the output directory by default, so a run is

    wififsm --out run synth --profiles separable.yaml
    wififsm --out run ingest run/trace.pcap
    wififsm --out run segment
    wififsm --out run fingerprint --p 4 --truth run/ground_truth.csv
    wififsm --out run match --metric combined

Exit codes: 0 ok, 1 usage or configuration error, 2 input format error,
3 evaluation error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from . import __version__, store
from .baselines import discrimination_accuracy, probe_events, write_results_csv
from .burstseg import UNKNOWN_DEVICE, filter_clients, group_bursts, persistent_device_map, segment_bursts
from .errors import (ConfigurationError, ContractViolation, EvaluationError, FormatError, StageError,
                     TrainingError, UnsupportedKindError, WifiFsmError)
from .evalharness import ExperimentConfig, emit_report, read_report_csv, run_sweep
from .featurize import fingerprint_groups, normalize_features
from .ingest import load_oui_table, read_capture, sanitize
from .learn import (ClassifierModel, classifier_experiment, evaluation_rows, match_with_model,
                    write_evaluation_csv)
from .similarity import (COMBINED, METRICS, all_matrices, blocked_nearest_neighbor, combined_matrix,
                         distance_matrix, nearest_neighbor_match, write_match_csv, write_matrix)
from .synthgen import generate_trace, load_profiles, read_ground_truth_csv, save_capture

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_EVALUATION = 0, 1, 2, 3

FRAMES = "frames.v1.ndjson"
SANITIZED = "frames.sanitized.v1.ndjson"
BURSTS = "bursts.v1.ndjson"
GROUPS = "groups.v1.ndjson"
FSMS = "fsm.v1.ndjson"
FEATURES = "features.v1.ndjson"
MODEL = "model.v1.ndjson"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _path(args, explicit, default_name: str) -> Path:
    return Path(explicit) if explicit else args.out / default_name


def _oui(args):
    return load_oui_table(args.oui) if args.oui else frozenset()


# --- subcommands -------------------------------------------------------------

def cmd_synth(args) -> int:
    profiles, settings = load_profiles(args.profiles)
    duration = args.duration or settings.get("duration")
    if duration is None:
        raise ConfigurationError("no duration given and none in the profile file")
    frames, truth = generate_trace(profiles, float(duration), args.seed, capture_id=args.capture_id)
    save_capture(args.out / "trace.pcap", frames)
    truth.write_csv(args.out / "ground_truth.csv")
    _log(f"synth: {len(frames)} frames from {len(truth.device_profiles)} devices")
    return EXIT_OK


def cmd_ingest(args) -> int:
    frames, stats = read_capture(args.pcap, args.capture_id)
    store.write_records(args.out / FRAMES, "frames.v1", frames, seed=args.seed)
    _log(f"ingest: {stats.management} management frames; dropped {stats.dropped_non_management} "
         f"control/data, {stats.dropped_fragments} fragments, {stats.unknown_subtype} unknown subtype, "
         f"{stats.malformed} malformed, {stats.truncated_records} truncated")
    return EXIT_OK


def cmd_sanitize(args) -> int:
    salt = args.salt.encode("utf-8") if args.salt is not None else b""
    frames = store.read_records(_path(args, args.frames, FRAMES), "frames.v1")
    store.write_records(args.out / SANITIZED, "frames.v1", sanitize(frames, salt), seed=args.seed)
    return EXIT_OK


def cmd_segment(args) -> int:
    frames = store.read_records(_path(args, args.frames, FRAMES), "frames.v1")
    clients, excluded = filter_clients(frames)
    bursts = segment_bursts(clients, args.gap)
    store.write_records(args.out / BURSTS, "bursts.v1", store.burst_refs(bursts, frames), seed=args.seed)
    _log(f"segment: {len(bursts)} bursts; {len(excluded)} AP MACs excluded")
    return EXIT_OK


def _device_lookup(args, refs, bursts):
    """Burst -> device id, from a generator ground-truth CSV or from persistent MACs."""
    if args.truth:
        devices, _ = read_ground_truth_csv(args.truth)
        if len({r.capture_id for r in refs}) > 1:
            raise ConfigurationError("--truth applies to a single capture")
        by_burst = {}
        for r in refs:
            if max(r.frames) >= len(devices):
                raise ConfigurationError("ground truth has fewer frames than the frame file")
            by_burst[(r.capture_id, r.mac, r.index_within_mac)] = devices[r.frames[0]]
        return lambda b: by_burst[(b.capture_id, b.mac, b.index_within_mac)]
    mapping = persistent_device_map(bursts, _oui(args))
    return lambda b: mapping[b.mac]


def cmd_fingerprint(args) -> int:
    frames = store.read_records(_path(args, args.frames, FRAMES), "frames.v1")
    refs = store.read_records(_path(args, args.bursts, BURSTS), "bursts.v1")
    bursts = store.resolve_bursts(refs, frames)
    P = math.inf if args.p == 0 else args.p
    groups = group_bursts(bursts, P, _device_lookup(args, refs, bursts))
    if not args.include_partial:
        groups = [g for g in groups if not g.partial]
    fsms, vectors = fingerprint_groups(groups, args.seed)
    store.write_records(args.out / GROUPS, "groups.v1", store.group_refs(groups), seed=args.seed)
    store.write_records(args.out / FSMS, "fsm.v1",
                        [store.FsmRecord(g.pseudo_id, g.device_id, m) for g, m in zip(groups, fsms)],
                        seed=args.seed)
    store.write_records(args.out / FEATURES, "features.v1", vectors, seed=args.seed)
    known = sum(g.device_id != UNKNOWN_DEVICE for g in groups)
    _log(f"fingerprint: {len(groups)} groups at P={args.p} ({known} with a known device)")
    return EXIT_OK


def _load_vectors(args):
    vectors = store.read_records(_path(args, args.features, FEATURES), "features.v1")
    if len(vectors) < 2:
        raise EvaluationError("need at least 2 fingerprints")
    return vectors


def cmd_match(args) -> int:
    vectors = _load_vectors(args)
    normalized = vectors if all(v.normalized for v in vectors) else normalize_features(vectors)
    ids = [v.device_id for v in normalized]
    if args.blocked:
        result = blocked_nearest_neighbor(normalized, ids, args.metric)
    else:
        if args.metric == COMBINED:
            matrix = combined_matrix(all_matrices(normalized))
        else:
            matrix = distance_matrix(normalized, args.metric)
        if args.matrix_out:
            write_matrix(args.matrix_out, matrix)
        result = nearest_neighbor_match(matrix, ids)
    write_match_csv(args.out / f"match_{args.metric}.csv", result, [v.fingerprint_id for v in normalized])
    print(f"{args.metric}\t{result.accuracy!r}\t{result.n_eligible}")
    return EXIT_OK


def cmd_train(args) -> int:
    vectors = _load_vectors(args)
    model, evaluation = classifier_experiment(vectors, args.model, seed=args.seed,
                                              test_fraction=args.test_fraction, enable_svm=args.enable_svm,
                                              p=args.p)
    if model.kind != "svm_rbf":
        store.write_records(args.out / MODEL, "model.v1", [model], seed=args.seed)
    write_evaluation_csv(args.out / f"eval_{args.model}.csv", evaluation_rows(args.model, evaluation, args.p))
    print(f"{args.model}\t{evaluation.accuracy!r}\ttp={evaluation.tp} fp={evaluation.fp} "
          f"tn={evaluation.tn} fn={evaluation.fn}")
    if args.match_with_model:
        result = match_with_model(model, normalize_features(vectors))
        print(f"{args.model}-match\t{result.accuracy!r}\t{result.n_eligible}")
    return EXIT_OK


def cmd_eval(args) -> int:
    config = ExperimentConfig.from_file(args.config)
    if args.out_given or config.out_dir is None:
        config.out_dir = args.out
    if args.include_partial:
        config.include_partial = True
    report = run_sweep(config)
    sys.stdout.write(emit_report(report, "table").decode("utf-8"))
    return EXIT_OK


def cmd_baseline(args) -> int:
    frames = store.read_records(_path(args, args.frames, FRAMES), "frames.v1")
    bursts = store.resolve_bursts(store.read_records(_path(args, args.bursts, BURSTS), "bursts.v1"), frames)
    groups = store.resolve_groups(store.read_records(_path(args, args.groups, GROUPS), "groups.v1"), bursts)
    P = max((len(g.bursts) for g in groups), default=0)
    acc = discrimination_accuracy(probe_events(groups), args.method, args.samples, args.tau, args.seed)
    write_results_csv(args.out / f"baseline_{args.method}.csv",
                      [{"method": args.method, "P": P, "tau": args.tau, "samples": args.samples,
                        "accuracy": repr(acc), "seed": args.seed}])
    print(f"{args.method}\t{acc!r}")
    return EXIT_OK


def cmd_report(args) -> int:
    source = _path(args, args.input, "report.csv")
    try:
        data = source.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read report {source}: {exc}") from None
    out = emit_report(read_report_csv(data), args.format)
    if args.output:
        Path(args.output).write_bytes(out)
    else:
        sys.stdout.buffer.write(out)
    return EXIT_OK


# --- parser ------------------------------------------------------------------

def _global_options(parser, suppress: bool) -> None:
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=default(0), help="seed for every random choice (default 0)")
    parser.add_argument("--out", type=Path, default=default(None), help="output directory (default: .)")
    parser.add_argument("--oui", default=default(None), help="OUI table, one XX:XX:XX prefix per line")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wififsm", description="FSM-based Wi-Fi device fingerprinting.")
    parser.add_argument("--version", action="version", version=f"wififsm {__version__}")
    _global_options(parser, suppress=False)
    common = _Parser(add_help=False)
    _global_options(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="generate a labelled synthetic capture")
    p.add_argument("--profiles", required=True, help="profile file (YAML)")
    p.add_argument("--duration", type=float, help="seconds (default: from the profile file)")
    p.add_argument("--capture-id", default="trace")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common], help="parse a pcap into frames.v1")
    p.add_argument("pcap")
    p.add_argument("--capture-id", default=None, help="default: the file stem")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("sanitize", parents=[common], help="pseudonymize MACs, blank SSIDs, rebase time")
    p.add_argument("--frames", help=f"input (default: OUT/{FRAMES})")
    p.add_argument("--salt", required=True)
    p.set_defaults(func=cmd_sanitize)

    p = sub.add_parser("segment", parents=[common], help="drop AP MACs and split frames into bursts")
    p.add_argument("--frames", help=f"input (default: OUT/{FRAMES})")
    p.add_argument("--gap", type=float, default=1.0)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("fingerprint", parents=[common], help="group bursts, build FSMs and features")
    p.add_argument("--p", type=int, required=True, help="bursts per group (0 = one group per device)")
    p.add_argument("--frames")
    p.add_argument("--bursts")
    p.add_argument("--truth", help="ground-truth CSV from synth (default: persistent MACs)")
    p.add_argument("--include-partial", action="store_true")
    p.set_defaults(func=cmd_fingerprint)

    p = sub.add_parser("match", parents=[common], help="nearest-neighbour matching")
    p.add_argument("--metric", choices=[*METRICS, COMBINED], default=COMBINED)
    p.add_argument("--features")
    p.add_argument("--blocked", action="store_true", help="never hold a full n x n matrix")
    p.add_argument("--matrix-out", help="also dump the distance matrix (float32)")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("train", parents=[common], help="train and evaluate a pair classifier")
    p.add_argument("--model", choices=["lr", "rf", "svm"], required=True)
    p.add_argument("--features")
    p.add_argument("--p", type=int, default=None, help="P label attached to the pairs")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--enable-svm", action="store_true", help="allow --model svm (needs scikit-learn)")
    p.add_argument("--match-with-model", action="store_true",
                   help="also report nearest-neighbour matching by classifier score")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="run an experiment sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--include-partial", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baseline", parents=[common], help="IE / sequence-number discrimination accuracy")
    p.add_argument("--method", choices=["ie", "seq"], required=True)
    p.add_argument("--tau", type=float, default=600.0)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--frames")
    p.add_argument("--bursts")
    p.add_argument("--groups")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("report", parents=[common], help="re-emit a sweep report")
    p.add_argument("--format", choices=["csv", "table", "plotdata"], default="table")
    p.add_argument("--input", help="report CSV (default: OUT/report.csv)")
    p.add_argument("--output", help="write here instead of stdout")
    p.set_defaults(func=cmd_report)
    return parser


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        return _exit_code(exc.cause)
    if isinstance(exc, (EvaluationError, TrainingError)):
        return EXIT_EVALUATION
    if isinstance(exc, (FormatError, OSError)):
        return EXIT_FORMAT
    if isinstance(exc, (ConfigurationError, ContractViolation, UnsupportedKindError, UsageError)):
        return EXIT_USAGE
    return EXIT_USAGE


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.out_given = args.out is not None
        args.out = args.out or Path(".")
        args.out.mkdir(parents=True, exist_ok=True)
        return args.func(args)
    except UsageError as exc:
        _log(str(exc))
        return EXIT_USAGE
    except (WifiFsmError, OSError, ValueError) as exc:
        _log(f"wififsm: error: {exc}")
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
