class ValidationError(ValueError):
    """Bad inputs or configuration: wrong shapes, out-of-range values, malformed files."""


class NumericalError(RuntimeError):
    """Linear algebra failed beyond repair (matrix not positive definite after jitter)."""
