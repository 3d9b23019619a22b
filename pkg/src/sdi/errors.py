"""Exception types shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, bad or
inconsistent data exits 2, numerical failures exit 3.
"""


class SdiError(Exception):
    """Base class for all library errors."""


class DataError(SdiError, ValueError):
    """Input data violates a precondition (shape, span, class balance...)."""


class NumericError(SdiError, ArithmeticError):
    """A computation is undefined for the given inputs."""


class SignalLostError(NumericError):
    """The baseband envelope collapsed for too long to track phase."""


class UsageError(SdiError):
    """Bad command-line arguments or configuration."""
