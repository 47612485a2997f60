"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid shapes, hyperparameters or flag combinations."""


class UsageError(RuntimeError):
    """An API was called out of order (e.g. backward before forward)."""


class TrainingError(RuntimeError):
    """Non-finite values encountered during optimisation."""


class IngestionError(ValueError):
    """Malformed input data file."""


class MetricError(ValueError):
    """Metric requested on invalid inputs (e.g. empty point sets)."""
