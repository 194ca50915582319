"""Exception types raised across the package.

Every error carries a short machine-readable ``code`` (the class name) so the
CLI can report a one-line reason.
"""


class KlinfError(ValueError):
    @property
    def code(self) -> str:
        return type(self).__name__


class EmptySample(KlinfError):
    pass


class NonFiniteSample(KlinfError):
    pass


class InvalidDistribution(KlinfError):
    pass


class SupportOutsideInterval(KlinfError):
    pass


class MeanConstraintInfeasible(KlinfError):
    """The target mean lies above the interval: no competitor exists."""


class DegenerateAtUpperBound(KlinfError):
    """Target equals the upper endpoint and the measure is not a point mass there."""


class TiltInfeasible(KlinfError):
    pass


class ZeroVariance(KlinfError):
    pass


class SprinkleInfeasible(KlinfError):
    pass


class DomainError(KlinfError):
    pass


class NoConvergence(KlinfError):
    pass


class QuadratureFailure(KlinfError):
    pass
