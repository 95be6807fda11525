from typing import Optional


class CreditLabError(Exception):
    """Base class for every error raised by the laboratory"""


class DimensionError(CreditLabError, ValueError):
    """Vector or matrix shapes do not line up"""


class NumericError(CreditLabError, ArithmeticError):
    """A value became NaN or infinite"""

    def __init__(self, message: str, iteration: Optional[int] = None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration


class LabelRangeError(CreditLabError, IndexError):
    """A label or snapshot index lies outside its valid range"""


class ClassRangeError(CreditLabError, ValueError):
    """A class range does not fit inside the classifier head"""


class SequencingError(CreditLabError, RuntimeError):
    """An operation was requested out of task order"""


class ConfigError(CreditLabError, ValueError):
    """Invalid run configuration. `path` is the dotted key path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class DataFormatError(CreditLabError, ValueError):
    """A dataset file could not be parsed"""

    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}, line {line}: {message}")
        self.path = path
        self.line = line


class DataError(CreditLabError, ValueError):
    """Dataset content violates a requirement"""


class MetricsStateError(CreditLabError, RuntimeError):
    """Metrics requested from an incomplete accuracy matrix"""


class OutputExistsError(CreditLabError, FileExistsError):
    """Refusing to overwrite an existing result file"""
