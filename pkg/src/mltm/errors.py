"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class MLTMError(Exception):
    exit_code = 1


class ConfigError(MLTMError):
    """Invalid or unknown configuration setting."""

    exit_code = 2


class DataError(MLTMError):
    """Malformed corpus, score or model file, or data violating a precondition."""

    exit_code = 3


class CorpusFormatError(DataError):
    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class ModelFormatError(DataError):
    pass


class NumericError(MLTMError):
    """A numeric validation failed (non-stochastic rows, degenerate weights)."""

    exit_code = 4
