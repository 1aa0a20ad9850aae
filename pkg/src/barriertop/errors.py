"""Exception types shared across the package.

Validation errors signal bad input (CLI exit code 2); numerical errors
signal a computation that started from valid input but could not finish
(CLI exit code 3).
"""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class NumericalError(RuntimeError):
    """A numerical procedure failed to meet its contract."""


class DomainEscapeError(NumericalError):
    """A trajectory left the model's validity neighborhood.

    Attributes
    ----------
    exit_time : float
        Time at which the trajectory was detected outside the neighborhood.
    """

    def __init__(self, message, exit_time=None):
        super().__init__(message)
        self.exit_time = exit_time


class FoldError(NumericalError):
    """A Lagrangian manifold stopped projecting injectively to x-space."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class ConvergenceError(NumericalError):
    """An iterative limit or root finder did not converge."""


class PoleError(NumericalError):
    """The spectral parameter sits on a pole of the transition symbol.

    Attributes
    ----------
    lattice_point : complex
        The offending spectral lattice point.
    """

    def __init__(self, message, lattice_point=None):
        super().__init__(message)
        self.lattice_point = lattice_point
