"""Exception hierarchy, mapped onto CLI exit codes by cli.py."""


class CrimecastError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(CrimecastError):
    """A dimension argument is out of its valid range (e.g. T < 2)."""


class SingularityError(CrimecastError):
    """Two regions coincide and no distance floor is available."""


class LoadError(CrimecastError):
    """A data file is malformed; message names the file and line."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class ConfigError(CrimecastError):
    """A run configuration is inconsistent with itself or the data."""


class NumericError(CrimecastError):
    """A non-finite or singular intermediate was produced."""


class DivergenceError(NumericError):
    """The ADMM objective blew up; usually means eta is too large."""


class InsufficientHistoryError(CrimecastError):
    """Not enough time slots for the requested decay window."""
