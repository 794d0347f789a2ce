"""Exception types raised across the package."""


class RankflowError(Exception):
    """Base class for all package errors."""


class ShapeError(RankflowError, ValueError):
    """Operands have incompatible dimensions."""


class DomainError(RankflowError, ValueError):
    """An argument lies outside the domain of an operation."""


class DegeneracyError(RankflowError, ValueError):
    """The target matrix does not have distinct positive singular values."""


class PreconditionError(RankflowError, ValueError):
    """An initial condition violates a documented precondition."""
