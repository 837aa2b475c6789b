"""Exception types shared across the package.

The split keeps CLI exit codes honest: schema/content problems in user
data map to ``DataError``, numerical failures (non-PD kernel matrices,
infeasible closed-form inputs) map to ``NumericError``. Programming
errors (bad arguments) stay plain ``ValueError``/``TypeError``.
"""


class PoroforestError(Exception):
    """Base class for package-specific failures."""


class DataError(PoroforestError):
    """Input data violates the schema or a content invariant."""


class NumericError(PoroforestError):
    """A numerical procedure failed or produced an infeasible result."""
