"""Exception hierarchy shared across the package."""


class PermbootError(Exception):
    """Base class for all package-specific errors."""


class DomainError(PermbootError, ValueError):
    """An evaluation or integration point lies outside a function's domain."""


class ContractError(PermbootError, ValueError):
    """A caller violated a documented precondition."""


class SingularityError(PermbootError, ArithmeticError):
    """A computation hit a genuine singularity (e.g. empty risk set).

    Carries the offending time point in ``at`` when known.
    """

    def __init__(self, message, at=None):
        super().__init__(message)
        self.at = at


class DataError(PermbootError, ValueError):
    """Malformed input data (CSV, config files)."""
