"""Exception hierarchy shared across the package."""


class HtcnnError(Exception):
    """Base class for all package errors."""


class ConfigurationError(HtcnnError, ValueError):
    pass


class StructuralError(HtcnnError, ValueError):
    """Shapes or timestamp grids do not line up."""


class WindowingError(HtcnnError, ValueError):
    """Not enough history to build a sample."""


class DataError(HtcnnError):
    """Malformed or inconsistent on-disk data."""


class ParseError(DataError):
    def __init__(self, path, message, line=None):
        self.path = str(path)
        self.line = line
        where = self.path if line is None else f"{self.path}:{line}"
        super().__init__(f"{where}: {message}")


class ConfigFileError(ConfigurationError):
    """A key-value config file is unreadable or malformed."""

    def __init__(self, path, message, line=None):
        self.path = str(path)
        self.line = line
        where = self.path if line is None else f"{self.path}:{line}"
        super().__init__(f"{where}: {message}")


class StalenessError(DataError):
    """Model artifacts were produced from a different dataset."""


class UsageError(HtcnnError, RuntimeError):
    pass


class NumericalError(HtcnnError, ArithmeticError):
    """Training diverged (NaN or inf loss)."""
