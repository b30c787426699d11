"""Exception types shared across the package."""


class PoolingError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(PoolingError, ValueError):
    """A caller-supplied value violates a documented invariant.

    ``field`` optionally names the offending configuration field so API
    layers can surface field-level messages.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class InvalidModelError(PoolingError):
    """The model assigns zero probability to every relevant option.

    Raised e.g. when a Gibbs conditional is requested for a conditioning
    state that is impossible under the prior and the observed data.
    """


class EnumerationBudgetError(PoolingError):
    """An exact-enumeration oracle was asked for a problem too large."""
