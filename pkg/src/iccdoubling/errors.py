"""Exception taxonomy.

Every failure the library can report derives from :class:`IccError`. The CLI
maps the three families below onto distinct exit codes.
"""


class IccError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ConfigError(IccError):
    exit_code = 2


class ParseError(ConfigError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ConfigError):
    def __init__(self, message, key=None):
        self.key = key
        super().__init__(message)


class NumericalError(IccError):
    exit_code = 3


class Divergence(NumericalError):
    """The orbit left the simulation box or produced non-finite values."""

    exit_code = 4


class DefectiveMatrix(NumericalError):
    pass


class OrbitMismatch(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class SingularNewtonStep(NumericalError):
    pass


class SaddleNotFound(NumericalError):
    pass


class AmbiguousDirections(NumericalError):
    pass


class BudgetExhausted(NumericalError):
    pass


class NonClosingCurve(NumericalError):
    pass


class DegenerateCloud(NumericalError):
    pass


class ProjectionFold(NumericalError):
    pass


class SelfIntersectingProjection(NumericalError):
    pass


class NoDoublingEigenvalue(NumericalError):
    def __init__(self, message, index=None):
        self.index = index
        super().__init__(message)


class DensityViolation(NumericalError):
    pass


class OrthogonalStep(NumericalError):
    pass


class EvenPeriodCylinder(NumericalError):
    pass


class NoCrossing(NumericalError):
    pass


class CycleLost(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class LowDensityWarning(UserWarning):
    """Classification used cycle points only; no manifold arcs in the loop."""
