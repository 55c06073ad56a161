"""Exception hierarchy shared across the package.

Every error raised on a user-facing path derives from OdynError so the CLI
can map failures to stable exit codes.
"""


class OdynError(Exception):
    """Base class for all package errors."""


class ShapeError(OdynError, ValueError):
    """Tensor or network shapes are inconsistent.

    Messages name both offending shapes so mismatches can be located
    without a debugger.
    """


class DomainError(OdynError, ValueError):
    """A value is outside the domain an operation requires."""


class NumericalError(OdynError, ArithmeticError):
    """A non-finite value appeared where finite numbers are required."""


class PlacementError(OdynError, RuntimeError):
    """Scene construction could not find a valid object placement."""


class DataError(OdynError, ValueError):
    """A data file is missing, truncated, or malformed."""


class UsageError(OdynError, ValueError):
    """Command line arguments or configuration are invalid."""
