"""Exception hierarchy.

Each error class carries the process exit code the command-line front end
uses when the error escapes a command.
"""


class KKPermError(Exception):
    """Base class for all errors raised by kkperm."""

    exit_code = 1


class ParseError(KKPermError, ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    exit_code = 3

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class DomainError(KKPermError, ValueError):
    """An argument lies outside the domain of the operation."""

    exit_code = 4


class SizeError(DomainError):
    """Combinatorial guard rail exceeded (exhaustive enumeration)."""


class DegenerateDataError(KKPermError, ValueError):
    """Data carry no variation, so the statistic is undefined."""

    exit_code = 5


class UnsupportedDesignError(KKPermError, ValueError):
    """The requested analysis does not support this design (e.g. unbalanced)."""

    exit_code = 6


class CalibrationError(KKPermError, ArithmeticError):
    """Beta calibration could not be fitted."""

    exit_code = 7


class NumericError(KKPermError, ArithmeticError):
    """An iterative numerical routine failed to converge."""

    exit_code = 8
