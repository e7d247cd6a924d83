"""Exception hierarchy shared across the toolkit."""


class NlscoreError(Exception):
    """Base class for all toolkit errors."""


class EstimationError(NlscoreError):
    """Domain statistics cannot be estimated from the given data."""


class ModelError(NlscoreError):
    """Invalid enrollment model construction or density evaluation."""


class TrainError(NlscoreError):
    """Transform training failed (bad pairing, divergence, non-finite values)."""


class ConfigError(NlscoreError):
    """Invalid configuration values."""


class EvalError(NlscoreError):
    """Trial construction, scoring, or metric computation failed."""


class ParseError(NlscoreError):
    """A text input file is malformed.

    Carries the file path and the 1-based line number when known.
    """

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        if path is not None and line is not None:
            message = f"{path}:{line}: {message}"
        elif path is not None:
            message = f"{path}: {message}"
        super().__init__(message)


class TrainWarning(UserWarning):
    """Non-fatal irregularity observed during transform training."""
