"""FSM-based passive Wi-Fi device fingerprinting.

Pipeline: ``ingest`` (pcap -> management frames) -> ``burstseg`` (bursts and
P-sized groups) -> ``fsm`` -> ``featurize`` -> ``similarity`` / ``learn``,
with ``baselines`` for IE and sequence-number association, ``synthgen`` for
labelled synthetic traces, ``store`` for record files and ``evalharness`` for
experiment sweeps.
"""

__version__ = "0.1.0"

from .errors import (ConfigurationError, ContractViolation, EvaluationError, FormatError,  # noqa: E402
                     RecordParseError, SchemaError, StageError, StorageError, TrainingError,
                     UnsupportedKindError, UnsupportedLinkTypeError, WifiFsmError)
from .ingest import (FrameSubtype, InformationElement, MacAddress, ManagementFrame,  # noqa: E402
                     is_randomized_mac, load_oui_table, parse_capture, read_capture, sanitize)
from .burstseg import Burst, BurstGroup, filter_clients, group_bursts, segment_bursts  # noqa: E402
from .fsm import Fsm, FsmState, build_fsm, merge_fsms, vendor_transition_means  # noqa: E402
from .featurize import FeatureVector, extract_features, normalize_features  # noqa: E402
from .similarity import (DistanceMatrix, combined_matrix, distance_matrix,  # noqa: E402
                         nearest_neighbor_match)
from .synthgen import VendorProfile, generate_trace, load_profiles, write_capture  # noqa: E402

__all__ = [
    "__version__", "WifiFsmError", "ConfigurationError", "ContractViolation", "EvaluationError",
    "FormatError", "RecordParseError", "SchemaError", "StageError", "StorageError", "TrainingError",
    "UnsupportedKindError", "UnsupportedLinkTypeError", "FrameSubtype", "InformationElement",
    "MacAddress", "ManagementFrame", "is_randomized_mac", "load_oui_table", "parse_capture",
    "read_capture", "sanitize", "Burst", "BurstGroup", "filter_clients", "group_bursts",
    "segment_bursts", "Fsm", "FsmState", "build_fsm", "merge_fsms", "vendor_transition_means",
    "FeatureVector", "extract_features", "normalize_features", "DistanceMatrix", "combined_matrix",
    "distance_matrix", "nearest_neighbor_match", "VendorProfile", "generate_trace", "load_profiles",
    "write_capture",
]
