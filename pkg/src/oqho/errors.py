"""Exception hierarchy shared by all oqho modules."""


class OqhoError(Exception):
    """Base class for errors raised by oqho."""


class InvalidInputError(OqhoError, ValueError):
    """Malformed, non-finite or dimensionally inconsistent input."""


class StabilityError(OqhoError):
    """A dynamics matrix that must be Hurwitz is not."""


class ShiftTooLargeError(StabilityError):
    """Lyapunov shift at or beyond the spectral abscissa."""


class NumericalError(OqhoError):
    """A dense linear-algebra kernel failed (singular system, lost accuracy)."""


class DecompositionError(NumericalError):
    """A matrix that must be positive definite could not be factored."""


class DegeneracyError(NumericalError):
    """A quantity is undefined because some matrix is singular."""


class AccuracyError(NumericalError):
    """Quadrature or transform result failed its internal accuracy check."""


class DivergenceError(OqhoError):
    """An integral that defines the requested quantity does not converge."""


class CoverageError(OqhoError):
    """A sampling grid is too narrow for the field placed on it."""


class UnsupportedRepresentationError(OqhoError):
    """Operation is only defined for some strength-function representations."""
