"""Exception types shared across the package."""


class KacError(Exception):
    """Base class for all errors raised by this package."""


class SizeError(KacError, ValueError):
    """An enumeration was requested beyond its configured maximum."""


class DomainError(KacError, ValueError):
    """An argument lies outside the domain of an operation."""


class IncompleteInputError(KacError, KeyError):
    """A required moment or cumulant entry is missing."""

    def __str__(self) -> str:
        return Exception.__str__(self)


class PreconditionError(KacError, ValueError):
    """A structural precondition on the inputs does not hold."""


class DivergenceError(KacError, ArithmeticError):
    """A time integration produced non-finite values."""


class SolverError(KacError, ArithmeticError):
    """A linear system could not be solved reliably."""


class SamplingError(KacError, ValueError):
    """More samples were requested than the population provides."""


class DegenerateDensityError(KacError, RuntimeError):
    """A Metropolis chain never accepted a proposal."""


class InsufficientSignalError(KacError, ValueError):
    """A series never rises above its noise floor."""


class RangeError(KacError, ValueError):
    """A requested time lies outside an available trajectory."""
