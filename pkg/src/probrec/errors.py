"""Exception and warning types raised across the package."""


class ReconciliationError(Exception):
    """Base class for every error raised by probrec."""


# hierarchy
class EmptyMatrix(ReconciliationError, ValueError):
    pass


class AllZeroRow(ReconciliationError, ValueError):
    pass


class LabelCountMismatch(ReconciliationError, ValueError):
    pass


class DimensionMismatch(ReconciliationError, ValueError):
    pass


# distributions
class InvalidParameter(ReconciliationError, ValueError):
    pass


class FactorizationFailure(ReconciliationError, ArithmeticError):
    pass


# gaussian reconciliation
class SingularQ(ReconciliationError, ArithmeticError):
    pass


class NumericalBreakdown(ReconciliationError, ArithmeticError):
    pass


class DegenerateWeights(ReconciliationError, ArithmeticError):
    pass


class CorrelatedBlocks(ReconciliationError, ValueError):
    pass


class MultipleUppers(ReconciliationError, ValueError):
    pass


# importance sampling
class AllWeightsZero(ReconciliationError, ArithmeticError):
    pass


class MultipleUppersUnsupported(MultipleUppers):
    pass


class NotIndependent(ReconciliationError, ValueError):
    pass


class ContinuousUnsupported(ReconciliationError, TypeError):
    pass


class EmptySamples(ReconciliationError, ValueError):
    pass


# enumeration
class ZeroNormalizer(ReconciliationError, ArithmeticError):
    pass


class SupportExplosion(ReconciliationError, MemoryError):
    pass


class ZeroCoherence(ReconciliationError, ArithmeticError):
    pass


# scoring
class InsufficientSamples(ReconciliationError, ValueError):
    pass


class InvertedInterval(ReconciliationError, ValueError):
    pass


class NegativeMetric(ReconciliationError, ValueError):
    pass


# score-driven simulation
class NonFiniteUpdate(ReconciliationError, ArithmeticError):
    pass


class AllZeroSeries(ReconciliationError, ValueError):
    pass


class ConfigError(ReconciliationError, ValueError):
    pass


class TruncationWarning(UserWarning):
    """Support enumeration hit the hard cap before the tail mass fell below tolerance."""


class LowESSWarning(UserWarning):
    """Importance weights are degenerate (ESS below 1% of the draws)."""
