"""Exception hierarchy for the scoring pipeline and its statistics."""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PipelineError):
    """Bad run configuration: missing inputs, invalid parameters, absent seed."""


class FormatError(PipelineError):
    """Input stream is unusable as a whole (wrong format, mostly malformed)."""


class RecordError(PipelineError):
    """A single record violates a contract (e.g. timestamp out of range)."""


class ValidationError(PipelineError):
    """A loaded table contains invalid values (e.g. nonpositive weights)."""


class InsufficientDataError(PipelineError):
    """Not enough data to compute the requested quantity."""


class DegenerateDataError(PipelineError):
    """The statistic is undefined on this input (zero variance and the like)."""


class DomainError(PipelineError):
    """An argument is outside the mathematical domain of the operation."""
