"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An operation received arguments violating its preconditions."""


class ConfigurationError(ValueError):
    """A model or run configuration cannot produce the required contract."""


class IngestionError(RuntimeError):
    """A source data file is missing or malformed. Message names the file."""


class IncompatibleCacheError(RuntimeError):
    """A cache file has a missing or unsupported format version."""


class DependencyError(RuntimeError):
    """A required artifact is missing. Message names the command that produces it."""


class TrainingQualityError(RuntimeError):
    """A trained model failed to reach its contractual quality thresholds."""


class NonFiniteLossError(RuntimeError):
    """A loss term became NaN or infinite during training. Message names the term."""
