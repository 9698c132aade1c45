"""Exception types raised by kdisc."""


class KdiscError(ValueError):
    """Base class for invalid inputs or parameters."""


class DimensionError(KdiscError):
    """Sample dimensions or row counts do not line up."""


class UnsupportedKernelError(KdiscError):
    """The kernel family does not support the requested operation."""


class DesignError(KdiscError):
    """Design parameters are out of range for the sample size."""


class DegenerateNormalizerError(KdiscError, ArithmeticError):
    """A normalising standard deviation fell below the floor.

    ``kernel_index`` identifies the offending kernel in a collection, when known.
    """

    def __init__(self, message, kernel_index=None):
        super().__init__(message)
        self.kernel_index = kernel_index


class OracleCapError(KdiscError):
    """Input too large for the brute-force reference implementations."""


class DataError(KdiscError):
    """Malformed input file."""
