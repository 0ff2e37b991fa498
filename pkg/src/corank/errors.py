"""Exception types shared across the toolkit."""


class CorankError(Exception):
    """Base class for all toolkit errors."""


class ParseError(CorankError):
    """A text input could not be parsed; carries the offending line number."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class DataError(CorankError):
    """Input data violates a structural requirement (duplicates, empty split, ...)."""


class ConfigError(CorankError):
    """Invalid parameter combination or configuration value."""


class TrainingError(CorankError):
    """Optimization failed (divergence, NaN objective); carries the epoch."""

    def __init__(self, message, epoch=None):
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)
        self.epoch = epoch


class MetricError(CorankError):
    """A metric is undefined for the given inputs."""
