"""Exception hierarchy shared across the package."""


class AlassoError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(AlassoError, ValueError):
    """Malformed or inconsistent input (shapes, ranges, file contents)."""


class RankDeficiencyError(ValidationError):
    """Design matrix is numerically rank deficient."""


class DegenerateWeightError(AlassoError, ValueError):
    """A penalized coordinate has a (numerically) zero least-squares estimate."""


class ConvergenceError(AlassoError, RuntimeError):
    """An iterative solver hit its iteration cap before meeting tolerance."""


class UndefinedDenominatorError(AlassoError, ArithmeticError):
    """The weight ``|phi_j + psi_j * Z_j|`` vanished in a finite-penalty coordinate."""


class InvalidScheduleError(ValidationError):
    """Tuning schedule does not satisfy ``lambda* -> inf`` and ``lambda*/n -> 0``."""


class NotAMemberError(ValidationError):
    """Point is not a member of the limit set."""


class ZeroDirectionError(ValidationError):
    """Direction vanishes after projection onto the feasible subspace."""
