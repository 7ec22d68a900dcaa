"""Exception types shared across the package."""


class EdgeSparseError(Exception):
    pass


class InvalidShapeError(EdgeSparseError, ValueError):
    pass


class InvalidParameterError(EdgeSparseError, ValueError):
    pass


class NumericFailureError(EdgeSparseError, FloatingPointError):
    pass


class DegenerateVarianceError(InvalidShapeError):
    pass


class TooFewClustersError(InvalidParameterError):
    pass


class TooManyClustersError(InvalidParameterError):
    pass


class NoThresholdError(EdgeSparseError, ValueError):
    pass


class ImageIOError(EdgeSparseError, OSError):
    pass
