"""Exception hierarchy.

Two families: :class:`InputError` for data that violates the design
(mapped to CLI exit code 2) and :class:`EstimationError` for estimators that
cannot produce a value on valid data (exit code 3).
"""


class EnrtError(Exception):
    """Base class for all package errors."""


class InputError(EnrtError, ValueError):
    pass


class EstimationError(EnrtError, ArithmeticError):
    pass


# -- input / design violations ------------------------------------------------

class SchemaError(InputError):
    pass


class OverlappingNetwork(InputError):
    pass


class InconsistentExposure(InputError):
    pass


class MissingTrueExposure(InputError):
    pass


class MissingTrueExposureInValidation(MissingTrueExposure):
    pass


class InvalidScenario(InputError):
    pass


class InvalidRisk(InputError):
    pass


# -- estimation failures ------------------------------------------------------

class EmptyTable(EstimationError):
    pass


class EmptyValidation(EstimationError):
    pass


class EmptyArm(EstimationError):
    pass


class ZeroReferenceRisk(EstimationError):
    pass


class EmptyMargin(EstimationError):
    pass


class EmptyStratum(EstimationError):
    pass


class NonInvertible(EstimationError):
    pass


class NegativeCellEstimate(EstimationError):
    pass


class ZeroDenominator(EstimationError):
    pass


class DegenerateVariance(EstimationError):
    pass


class InsufficientClusters(EstimationError):
    pass


class TooManyFailedReplicates(EstimationError):
    pass


class InfeasibleParameters(EstimationError):
    pass


class NonConvergence(EstimationError):
    pass


class SingularInformation(EstimationError):
    pass
