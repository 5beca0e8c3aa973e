"""Exception types raised by mixstock."""


class MixStockError(Exception):
    """Base class for all package errors."""


class DataError(MixStockError, ValueError):
    """Malformed or dimensionally inconsistent input data.

    ``line`` is set when the problem can be traced to a row of an input
    file.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class ConfigError(MixStockError, ValueError):
    """Invalid run or chain configuration."""


class InitializationError(MixStockError, RuntimeError):
    """The sampler could not start from a finite posterior density."""
