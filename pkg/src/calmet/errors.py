"""Exception hierarchy.

Every error raised by the library derives from :class:`CalmetError`, which is
itself a ``ValueError`` so callers that only care about bad input can catch
the builtin.
"""


class CalmetError(ValueError):
    pass


# data model
class DimensionMismatch(CalmetError):
    pass


class NonStochasticRow(CalmetError):
    pass


class OutOfRangeProbability(CalmetError):
    pass


class LabelOutOfRange(CalmetError):
    pass


class ClassIndexOutOfRange(CalmetError):
    pass


# metric preconditions
class BoundaryConfidence(CalmetError):
    """A confidence of exactly 0 or 1 reached a log-odds or variance term."""


class ZeroDenominator(CalmetError):
    pass


class DegenerateDenominator(CalmetError):
    pass


class EmptyAfterFilter(CalmetError):
    pass


class NoEligibleBins(CalmetError):
    pass


class SingletonBin(CalmetError):
    pass


class MissingFeatures(CalmetError):
    pass


class IncompletePartition(CalmetError):
    pass


class DegenerateBinConfidence(CalmetError):
    pass


class TooFewBins(CalmetError):
    pass


class WindowTooLarge(CalmetError):
    pass


class TooFewPoints(CalmetError):
    pass


class FitFailure(CalmetError):
    pass


class SeparationFailure(FitFailure):
    pass


class SingularDesign(CalmetError):
    pass


class NoFixedPoint(CalmetError):
    pass


class DegenerateNull(CalmetError):
    pass


class WrongClassCount(CalmetError):
    pass


class SingleClass(CalmetError):
    pass


# detection
class NoDetections(CalmetError):
    pass


class TooFewDetections(CalmetError):
    pass


class NegativeExtent(CalmetError):
    pass


# io / orchestration
class ParseError(CalmetError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(CalmetError):
    pass


class ResampleFailure(CalmetError):
    pass
