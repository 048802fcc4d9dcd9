"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class UsageError(ValueError):
    """An operation was called outside its contract."""


class ParseError(ValueError):
    """Malformed input data; message carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TrainingError(RuntimeError):
    """Training aborted (e.g. non-finite loss); message carries diagnostics."""
