"""Exception types shared across the package."""


class DeepTCNError(Exception):
    """Base class for all package errors."""


class DimensionError(DeepTCNError, ValueError):
    """Operand shapes do not agree."""


class DomainError(DeepTCNError, ValueError):
    """Input outside the domain of an operation (log of a non-positive value, ...)."""


class NumericError(DeepTCNError, ArithmeticError):
    """A NaN or infinity was produced."""


class ConfigError(DeepTCNError, ValueError):
    """Invalid model, training or evaluation configuration."""


class DataError(DeepTCNError, ValueError):
    """Malformed or inconsistent input data."""


class CheckpointError(DeepTCNError, IOError):
    """Unreadable checkpoint file."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint written by an unsupported format version."""


class MetricError(DeepTCNError, ValueError):
    """A metric is undefined for the given inputs."""
