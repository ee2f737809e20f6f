"""Exception types raised by the triggering library."""


class TriggeringError(ValueError):
    """Base class for every domain error raised by this package."""


class DesignError(TriggeringError):
    """A study design or simulation setting violates its invariants."""


class SeriesError(TriggeringError):
    """An observation series or its serialized form is invalid."""


class EstimationInfeasibleError(TriggeringError):
    """The Beta model cannot be fitted to the given values."""


class DomainError(TriggeringError):
    """A special-function argument lies outside its domain."""


class TestInfeasibleError(TriggeringError):
    """A rank-sum comparison has an empty sample after filtering."""

    __test__ = False


class EvaluationError(TriggeringError):
    """Scoring failed for a subject or the inputs are misaligned."""


class IngestError(TriggeringError):
    """A raw export cannot be read with the requested schema."""


class ConfigError(TriggeringError):
    """A configuration file is unreadable or not a flat mapping."""
