"""Exception hierarchy shared by every stage."""


class WifiFsmError(Exception):
    """Base class for all errors raised by wififsm."""


class ConfigurationError(WifiFsmError, ValueError):
    """Invalid parameter or configuration value."""


class ContractViolation(WifiFsmError, ValueError):
    """An operation was called with inputs outside its contract."""


class FormatError(WifiFsmError):
    """Unreadable capture or record input."""


class UnsupportedLinkTypeError(FormatError):
    def __init__(self, linktype: int):
        super().__init__(f"unsupported pcap linktype {linktype} (expected 105 or 127)")
        self.linktype = linktype


class SchemaError(FormatError):
    def __init__(self, expected: str, found: str):
        super().__init__(f"schema mismatch: expected {expected!r}, found {found!r}")
        self.expected = expected
        self.found = found


class RecordParseError(FormatError):
    def __init__(self, path, lineno: int, reason: str):
        super().__init__(f"{path}:{lineno}: {reason}")
        self.path = path
        self.lineno = lineno


class StorageError(WifiFsmError, OSError):
    def __init__(self, path, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path


class TrainingError(WifiFsmError):
    """A classifier could not be fitted on the given data."""


class UnsupportedKindError(WifiFsmError, ValueError):
    """Unknown or disabled classifier kind."""


class EvaluationError(WifiFsmError):
    """An evaluation has no well-defined result (e.g. no eligible targets)."""


class StageError(WifiFsmError):
    """Wraps an error raised inside a pipeline stage, naming the stage."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
