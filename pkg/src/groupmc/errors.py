"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: UsageError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class GroupmcError(Exception):
    """Base class for all package errors."""


class UsageError(GroupmcError, ValueError):
    """Invalid parameter or configuration value."""


class DataError(GroupmcError):
    """Missing, malformed, or inconsistent input data."""


class NumericalError(GroupmcError, ArithmeticError):
    """Numerical failure (NaN loss, diverged iteration)."""
