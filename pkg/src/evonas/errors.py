"""Exception hierarchy shared across the package."""


class EvonasError(Exception):
    """Base class for all package errors."""


class EncodingError(EvonasError):
    """Malformed layer/block structure or an encoding that cannot proceed."""


class UnknownLayerError(EncodingError):
    """A canonical layer key is missing from a frozen vocabulary."""


class VocabError(EvonasError):
    """Token id outside the vocabulary, or misuse of the vocab lifecycle."""


class ShapeError(EvonasError):
    """Shape arithmetic produced a non-positive or inconsistent dimension."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConfigError(EvonasError):
    """Invalid configuration value or combination."""


class ParseError(EvonasError):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class GraphError(EvonasError):
    """Cell graph is not a DAG or violates vertex/edge limits."""


class TrainingDiverged(EvonasError):
    """Loss became NaN/Inf during training."""


class LabelError(EvonasError):
    """Classifier label outside the block library."""


class EvalError(EvonasError):
    """Fitness evaluation failed.  `code` discriminates causes."""

    NOT_IN_TABLE = "not_in_table"

    def __init__(self, message, code="eval_failed"):
        super().__init__(message)
        self.code = code


class ProtocolError(EvonasError):
    """Wire-protocol violation (malformed frame, timeout, dead worker)."""


class VersionMismatch(ProtocolError):
    """Worker speaks a different protocol version; never retried."""


class ReportError(EvonasError):
    """Reporting input missing, corrupt, or statistically degenerate."""
