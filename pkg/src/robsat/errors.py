"""Exception hierarchy shared across the package."""


class RobsatError(Exception):
    """Base class for all package errors."""


class ContractError(RobsatError, ValueError):
    """Malformed input: dimension mismatch, bad argument range."""


class ValidationError(RobsatError, ValueError):
    """A model fails one of its structural assumptions."""


class CapabilityError(RobsatError):
    """The backend cannot handle a cone or loss that appears in a program."""


class UnsupportedError(RobsatError):
    """Operation not defined for the given object."""


class SolverError(RobsatError):
    """Backend failure or an unexpected solver status."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class TargetTooLowError(RobsatError):
    """The target is not above the nominal optimum, so no feasible k exists."""

    def __init__(self, message, nominal=None):
        super().__init__(message)
        self.nominal = nominal


class InvariantViolation(RobsatError):
    """A guarantee that should hold mathematically was observed to fail."""
