"""Exception hierarchy shared by every subsystem."""


class BenchError(Exception):
    """Base class for all errors raised by blwbench."""

    #: short machine-readable tag used by the CLI error line
    code = "error"


class ShapeError(BenchError, ValueError):
    code = "shape"


class ConfigurationError(BenchError, ValueError):
    code = "config"


class NumericError(BenchError, FloatingPointError):
    code = "numeric"


class FormatError(BenchError, ValueError):
    code = "format"


class CompatibilityError(BenchError, ValueError):
    code = "compat"


class ParseError(FormatError):
    code = "parse"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnsupportedFormatError(FormatError):
    code = "unsupported-format"


class DataLengthError(FormatError):
    code = "length"


class DesignError(BenchError, ValueError):
    code = "design"


class UndefinedMetricError(BenchError, ArithmeticError):
    code = "undefined-metric"


class InsufficientDataError(BenchError, ValueError):
    code = "insufficient-data"


class ConsistencyError(BenchError, ValueError):
    code = "consistency"


class MissingRecordError(BenchError, FileNotFoundError):
    code = "missing-record"

    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__("missing records: " + ", ".join(self.missing))
