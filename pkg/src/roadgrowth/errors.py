"""Exception types shared across the package."""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class OutOfExtentError(PipelineError):
    """A coordinate or pixel lies outside the grid extent."""


class ParseError(PipelineError):
    """Malformed input text; the message carries a 1-based line number when known."""


class ValidationError(PipelineError):
    """Structurally parseable input with illegal content."""


class DimensionMismatchError(PipelineError):
    """Arrays or grids that must share dimensions do not."""


class EmptySequenceError(PipelineError):
    """A sequence operation received zero time steps."""


class LengthExceededError(PipelineError):
    """A sequence is longer than the configured maximum."""


class EmptyCorpusError(PipelineError):
    """A training routine received no data."""


class EmptyDatasetError(PipelineError):
    """A classifier fit received no rows."""


class ConfigError(PipelineError):
    """Invalid configuration values."""
