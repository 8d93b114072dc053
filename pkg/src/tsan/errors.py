"""Exception hierarchy shared by every subpackage."""


class TSANError(Exception):
    """Base class for library errors."""


class ConfigError(TSANError, ValueError):
    """Invalid configuration value or unknown config key."""


class ShapeError(TSANError, ValueError):
    """Tensor shapes are incompatible with an operation."""


class ContractError(TSANError, RuntimeError):
    """An operation was called outside its preconditions."""


class DataFormatError(TSANError, ValueError):
    """A data file does not follow the expected record layout."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)


class NumericalError(TSANError, FloatingPointError):
    """A forward op produced NaN or Inf from finite inputs."""
