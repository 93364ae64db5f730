"""Exception types shared across the pipeline stages."""


class SaladError(Exception):
    """Base class for all package-specific errors."""


class DatasetFormatError(SaladError, ValueError):
    """A dataset file or record violates the documented JSONL schema."""


class ConfigError(SaladError, ValueError):
    """A configuration value is outside its documented range."""


class OracleError(SaladError, RuntimeError):
    """A classifier oracle failed while scoring an example."""


class GenerationError(SaladError, RuntimeError):
    """Counterfactual generation failed for an example or a whole batch."""


class TaggerError(SaladError, RuntimeError):
    """A tagger backend failed or is unavailable."""


class TrainingError(SaladError, RuntimeError):
    """Training aborted, e.g. because the loss became non-finite."""
