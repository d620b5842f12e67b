"""Exception and warning types shared across the package."""


class LinrecError(Exception):
    """Base class for errors raised by linrec."""


class DataError(LinrecError, ValueError):
    """Bad input data: unreadable files, malformed rows, empty matrices, bad archives."""


class NumericalError(LinrecError, ArithmeticError):
    """A linear system or decomposition could not be computed reliably."""


class ShrinkageClampWarning(UserWarning):
    """Emitted when a matrix-factorization shrinkage factor is clamped at zero."""


class EmptyMaskWarning(UserWarning):
    """Emitted when a sparsification threshold masks out every entry."""
