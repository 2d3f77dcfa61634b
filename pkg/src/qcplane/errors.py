"""Exception hierarchy.

Every error raised for a violated mathematical precondition derives from
:class:`PreconditionError`; the CLI maps those to exit status 3.
"""


class QCPlaneError(Exception):
    """Base class for all package errors."""


class SchemaError(QCPlaneError):
    """Input file does not match the documented JSON schema."""


class PreconditionError(QCPlaneError):
    """A mathematical precondition of an operation does not hold."""


# planar_maps
class NonInjective(PreconditionError):
    pass


class DomainMismatch(PreconditionError):
    pass


class NearBoundary(PreconditionError):
    pass


class BoundaryMismatch(PreconditionError):
    def __init__(self, node, gap):
        super().__init__(f"piece disagrees with base at node {node} by {gap:.3e}")
        self.node = node
        self.gap = gap


class OverlappingSubdomains(PreconditionError):
    pass


# quasisymmetry
class NotIncreasing(PreconditionError):
    pass


class NoValidD(PreconditionError):
    pass


# extension
class NotSimple(PreconditionError):
    pass


class ModulusUnbounded(PreconditionError):
    pass


class NotQuasisymmetric(PreconditionError):
    pass


class ImageNotSimple(PreconditionError):
    pass


# cutoff
class EpsTooSmall(PreconditionError):
    pass


class GammaUnbounded(PreconditionError):
    pass


class ClosenessViolated(PreconditionError):
    pass


class RadiusOutOfBounds(PreconditionError):
    pass


class NotQuasicircle(PreconditionError):
    pass


# young_measures
class NotRankOne(PreconditionError):
    pass


class OutsideCone(PreconditionError):
    pass


class DensityUndefined(PreconditionError):
    pass


# variational
class InfeasibleInit(PreconditionError):
    pass


class DomainTooSmall(PreconditionError):
    pass
