"""Exception hierarchy shared by the model, the solvers and the harness."""


class OffloadError(Exception):
    """Base class for all package errors."""


class DomainError(OffloadError, ValueError):
    """An argument lies outside the domain of a formula."""


class InfeasibleLinkError(OffloadError):
    """Data must cross a link whose rate is zero."""


class InfeasibleAllocationError(OffloadError):
    """A task is assigned to a server without any CPU share."""


class BudgetBlowoutError(OffloadError):
    """The log argument of a utility term is not positive."""


class DeadlineUnreachableError(OffloadError):
    """No transmit power can meet the delay budget."""


class SizeRefusalError(OffloadError):
    """An instance is too large for exhaustive enumeration."""


class LedgerError(OffloadError):
    """A capacity grant exceeds the free capacity of a server."""


class MissingReferenceError(OffloadError):
    """A ratio was requested without the reference (exhaustive) utility."""
