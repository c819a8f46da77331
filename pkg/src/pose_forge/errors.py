"""Exception hierarchy shared by every pipeline stage.

The CLI maps each family to an exit code: ``DataError`` -> 2,
``AlgorithmFailure`` -> 3.
"""

from __future__ import annotations


class PoseForgeError(Exception):
    """Base class for all library errors."""


class DataError(PoseForgeError):
    """Input data is malformed or violates a precondition."""


class AlgorithmFailure(PoseForgeError):
    """The algorithm ran but could not produce a usable answer."""


class NonPositiveDepth(DataError):
    pass


class DegeneratePair(DataError):
    pass


class EmptyMask(DataError):
    pass


class NoValidDepth(DataError):
    pass


class LengthMismatch(DataError):
    pass


class DegenerateUpVector(DataError):
    pass


class ObjectBehindCamera(DataError):
    pass


class FormatError(DataError):
    pass


class InsufficientClasses(AlgorithmFailure):
    pass


class DegenerateConfiguration(AlgorithmFailure):
    pass


class NoHypotheses(AlgorithmFailure):
    pass


class NoCorrespondences(AlgorithmFailure):
    pass


class DivergenceDetected(AlgorithmFailure):
    pass


class NoTrackablePoints(AlgorithmFailure):
    pass


class TrackingLost(AlgorithmFailure):
    pass


class ZeroMotion(AlgorithmFailure):
    pass
