"""Exception hierarchy shared across the package."""


class HypeeError(Exception):
    """Base class for every error raised by this package."""


class ContractError(HypeeError, ValueError):
    """An argument violates a documented precondition."""


class ManifoldError(ContractError):
    """A point is off the hyperboloid or otherwise geometrically invalid."""


class NumericalError(HypeeError, ArithmeticError):
    """A computation produced or would produce non-finite values."""


class TangentOverflowError(NumericalError):
    """A tangent vector is too long to lift without overflowing cosh."""


class DataError(HypeeError):
    """Input data is malformed. Subclasses carry a machine-readable ``code``."""

    code = "data_error"

    def __init__(self, message, code=None):
        super().__init__(message)
        if code is not None:
            self.code = code
