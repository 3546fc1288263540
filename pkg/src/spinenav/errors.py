"""Exception types raised by the spinenav library."""


class SpineNavError(Exception):
    """Base class for all spinenav-specific errors."""


class MismatchedLengths(SpineNavError, ValueError):
    """Paired point lists have different lengths."""


class EmptyInput(SpineNavError, ValueError):
    """An operation received an empty point list where data is required."""


class DegenerateGeometry(SpineNavError, ValueError):
    """Input geometry is rank-deficient (collinear, coincident, or too few points)."""


class NonMonotonicTimestamp(SpineNavError, ValueError):
    """An observation timestamp precedes the filter's last update."""


class ParallelRays(SpineNavError, ValueError):
    """Two rays are parallel and have no unique closest point."""


class MissingNormals(SpineNavError, ValueError):
    """A point cloud operation requires normals but none are present."""


class NoCorrespondences(SpineNavError, RuntimeError):
    """All nearest neighbors fell beyond the correspondence distance gate."""


class CoincidentControlPoints(SpineNavError, ValueError):
    """Consecutive spline control points coincide."""


class PointsTooClose(SpineNavError, ValueError):
    """Consecutive captured points are closer than the required separation.

    Attributes:
        index: Index of the offending (second) point in the input sequence.
    """

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


class UnknownRegion(SpineNavError, KeyError):
    """A stroke references a region identifier the phantom does not define."""


class InvalidParams(SpineNavError, ValueError):
    """Generator or configuration parameters are out of their valid range."""
