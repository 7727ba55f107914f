"""Exceptions raised by the filtering library."""


class CascadeFuseError(Exception):
    """Base class for library errors."""


class NotPositiveDefinite(CascadeFuseError):
    """A covariance could not be factored, even after one jitter attempt."""


class SingularConditioning(CascadeFuseError):
    """A matrix that must be inverted (via factorization) is singular."""


class DimensionMismatch(CascadeFuseError, ValueError):
    """Array shapes are inconsistent with each other."""


class NoConvergence(CascadeFuseError):
    """An iterative procedure did not converge within its iteration budget."""
