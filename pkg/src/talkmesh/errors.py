"""Exception types raised across the package.

Everything derives from :class:`TalkMeshError` so callers (and the CLI) can
separate domain failures from programming errors.
"""


class TalkMeshError(Exception):
    """Base class for all domain errors."""


# mesh / file handling
class ParseError(TalkMeshError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NonTriangular(TalkMeshError):
    pass


class InvalidMesh(TalkMeshError):
    pass


class NonManifoldEdge(TalkMeshError):
    pass


class IsolatedVertex(TalkMeshError):
    pass


class IndexOutOfRange(TalkMeshError):
    pass


class MissingField(TalkMeshError):
    pass


class FormatError(TalkMeshError):
    pass


class NonFiniteValue(TalkMeshError):
    pass


# parameterization / point location
class TopologyNotDisk(TalkMeshError):
    pass


class SolverDidNotConverge(TalkMeshError):
    pass


class NotInChart(TalkMeshError):
    pass


class ArityMismatch(TalkMeshError):
    pass


# sampling / triangulation
class NegativeAlpha(TalkMeshError):
    pass


class NonPositiveSigma(TalkMeshError):
    pass


class EmptyKeypoints(TalkMeshError):
    pass


class TooFewSamples(TalkMeshError):
    pass


class AllCollinear(TalkMeshError):
    pass


class DuplicatePoints(TalkMeshError):
    pass


class EmptySamples(TalkMeshError):
    pass


class LengthMismatch(TalkMeshError):
    pass


# networks / training / metrics
class DomainError(TalkMeshError):
    pass


class ShapeMismatch(TalkMeshError):
    pass


class NonFiniteLoss(TalkMeshError):
    pass


class EpsNonPositive(TalkMeshError):
    pass


class SizeTooSmall(TalkMeshError):
    pass


class EmptyMask(TalkMeshError):
    pass


class TooFewFrames(TalkMeshError):
    pass


class TopologyMismatch(TalkMeshError):
    pass
