"""Exception types shared across the package."""


class VQLAError(Exception):
    """Base class for all package errors."""


class ConfigError(VQLAError):
    """Invalid or inconsistent configuration."""


class ShapeError(VQLAError):
    """Tensor shape does not match the operation's contract."""


class ManifestError(VQLAError):
    """Malformed manifest file."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class IntegrityError(VQLAError):
    """Dataset integrity violation, e.g. a frame shared across splits."""


class GenerationError(VQLAError):
    """Synthetic scene generation could not satisfy its constraints."""


class DegenerateBatchError(VQLAError):
    """Batch too small for the requested operation."""


class EvaluationError(VQLAError):
    """Evaluation called with unusable inputs."""


class TrainingError(VQLAError):
    """Training aborted; carries a diagnostic payload when available."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class MeasurementError(VQLAError):
    """Invalid throughput measurement request."""
