"""Exception hierarchy shared by every comink module.

Every error carries the process exit code the command line front end
returns when the error escapes a subcommand.
"""


class CominkError(Exception):
    """Base class of all comink errors."""

    exit_code: int = 1


# ==============================================================================
# Invalid input (exit 2)


class InvalidInputError(CominkError):
    """Raised when an input violates a documented precondition."""

    exit_code = 2


class DimensionMismatch(InvalidInputError):
    pass


class NotPointed(InvalidInputError):
    pass


class NotFullDim(InvalidInputError):
    pass


class AtomOutsideOmega(InvalidInputError):
    pass


class DirectionOutsideClosure(InvalidInputError):
    pass


class PositiveSupportNumber(InvalidInputError):
    pass


class NonpositiveMass(InvalidInputError):
    pass


class NonUnitAtom(InvalidInputError):
    pass


class TooManyAtoms(InvalidInputError):
    pass


class MissingValue(InvalidInputError):
    pass


class InsufficientBound(InvalidInputError):
    pass


class ConeMismatch(InvalidInputError):
    pass


class MarginTooSmall(InvalidInputError):
    pass


# ==============================================================================
# Geometric failures (exit 4)


class GeometryError(CominkError):
    """Raised when a geometric construction cannot be certified."""

    exit_code = 4


class EmptyIntersection(GeometryError):
    pass


class Unbounded(GeometryError):
    pass


class CertificationFailed(GeometryError):
    pass


class NegativeEndpoint(GeometryError):
    pass


# ==============================================================================
# Solver (exit 3)


class NoConvergence(CominkError):
    exit_code = 3
