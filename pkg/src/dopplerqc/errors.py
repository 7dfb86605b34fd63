"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: UsageError -> 1, DataError -> 2,
NumericError -> 3.
"""


class DopplerQCError(Exception):
    """Base class for all package errors."""


class UsageError(DopplerQCError):
    """Bad command-line flags or argument combinations."""


class DataError(DopplerQCError):
    """Malformed or unsupported input data (WAV, CSV, weight files)."""


class NumericError(DopplerQCError):
    """Numerical failure, e.g. divergence during training."""
