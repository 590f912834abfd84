"""Exception types shared across the package.

The CLI maps each class to an exit status, so raise the most specific one.
"""


class DiscSpecError(Exception):
    """Base class for all package errors."""


class ModelError(DiscSpecError, ValueError):
    """Bad model input: unparsable expression, sign violation, missing extension."""


class ConsistencyError(DiscSpecError, ArithmeticError):
    """An internal self-check (residual, bound, identity) failed."""


class ConvergenceError(DiscSpecError, RuntimeError):
    """An iteration that was required to converge did not."""
