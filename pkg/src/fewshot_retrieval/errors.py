"""Exception types shared across the package.

The CLI maps these onto exit codes: ``DataError`` -> 2, ``NumericError`` -> 3.
"""


class DataError(ValueError):
    """Malformed, inconsistent or insufficient input data."""


class NumericError(ArithmeticError):
    """A NaN or Inf appeared during training or evaluation."""
