"""Shared exception definitions for the application."""


class CrsomError(Exception):
    """Base exception for context-relevant map errors."""

    pass


class ConfigurationError(CrsomError):
    """Raised when a run configuration is missing or invalid."""

    pass


class DatasetError(CrsomError):
    """Raised when a dataset file cannot be read or violates its invariants."""

    pass


class ShapeMismatchError(CrsomError, ValueError):
    """Raised when array shapes do not line up between layers or samples."""

    pass


class TrainingError(CrsomError):
    """Raised when training diverges or cannot proceed."""

    pass


class GradientCheckError(CrsomError):
    """Raised when a gradient check instance is too degenerate to be meaningful."""

    pass


class SnapshotError(CrsomError):
    """Raised when a map snapshot cannot be produced or parsed."""

    pass


class ModelFormatError(CrsomError):
    """Raised when a saved model file is missing, malformed or of another schema."""

    pass
