"""Exception hierarchy shared by the numerical layers."""


class KirchhoffError(Exception):
    """Base class for all package errors."""


class DomainError(KirchhoffError, ValueError):
    """An argument lies outside the domain of the map being evaluated."""


class DegenerateExponentError(DomainError):
    pass


class RegimeError(KirchhoffError, ValueError):
    """Parameters do not match the regime an operation is restricted to."""


class ConfigError(KirchhoffError, ValueError):
    pass


class NumericalError(KirchhoffError, RuntimeError):
    """An iteration failed to converge where convergence is guaranteed."""


class SolverError(KirchhoffError, RuntimeError):
    """Base class for failures of the (Pa2) Newton solver."""

    def __init__(self, message, w=None, residual=None):
        super().__init__(message)
        self.w = w
        self.residual = residual


class SingularJacobian(SolverError):
    pass


class NoDecrease(SolverError):
    pass


class ConvergedToTrivial(SolverError):
    pass


class NonPositive(SolverError):
    pass


class SeedError(KirchhoffError, RuntimeError):
    """The bifurcation seed corrector did not land on the branch."""
