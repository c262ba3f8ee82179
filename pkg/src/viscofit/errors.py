class DomainError(ValueError):
    """Input outside the physically admissible domain."""


class ConfigError(ValueError):
    """Inconsistent model/run configuration."""


class ParseError(ValueError):
    """Malformed data file."""


class TrainingError(RuntimeError):
    """Training aborted (non-finite gradients, impossible stage, ...)."""
