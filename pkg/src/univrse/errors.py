"""Exception hierarchy shared across the package."""


class UnivrseError(Exception):
    """Base class for every error raised by this package."""


class InvalidConfig(UnivrseError):
    pass


class ConfigError(UnivrseError):
    """Fatal configuration or bootstrap problem (CLI exit code 2/3)."""


# --- image handling ---

class UnsupportedFormat(UnivrseError):
    pass


class CorruptImage(UnivrseError):
    pass


# --- backend access ---

class BackendError(UnivrseError):
    """Any failure while talking to a generation/NLI/LLM backend."""


class Timeout(BackendError):
    pass


class AuthFailure(BackendError):
    pass


class ScriptMiss(BackendError):
    """A scripted mock was queried with an input it has no entry for."""


class MalformedResponse(BackendError):
    """Endpoint reply missing required fields (e.g. no logprobs)."""


class SchemaViolation(BackendError):
    """Structured LLM output failed JSON parsing or schema validation."""


# --- sampling / distributions ---

class EmptySequence(UnivrseError):
    pass


class MissingTopK(UnivrseError):
    pass


class DegenerateDistribution(UnivrseError):
    """All sequence probabilities underflowed to zero."""


class LengthMismatch(UnivrseError):
    pass


class InvalidLambda(UnivrseError):
    pass


class NotADistribution(UnivrseError):
    pass


# --- labels / reports ---

class EmptyReport(UnivrseError):
    pass


class EmptyReference(UnivrseError):
    pass


class EmptyJudgments(UnivrseError):
    pass


class EmptyResponse(UnivrseError):
    pass


class NoAuxiliaryBackend(UnivrseError):
    pass


# --- metrics / calibration ---

class EmptySamples(UnivrseError):
    pass


class SingleClass(UnivrseError):
    """AUC requested but only one label class is present."""


class SingleClassLabels(SingleClass):
    """Threshold calibration requested with one label class."""


class EmptyRun(UnivrseError):
    pass


# --- dataset ingestion ---

class ParseError(UnivrseError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DuplicateId(UnivrseError):
    pass


class MissingImage(UnivrseError):
    pass
