"""Exception hierarchy.

Two families: :class:`ConfigError` for bad parameters (CLI exit code 2) and
:class:`DataError` for inputs that cannot be processed (CLI exit code 3).
"""


class TripletError(Exception):
    """Base class for all package errors."""


class ConfigError(TripletError, ValueError):
    pass


class DataError(TripletError, ValueError):
    pass


class InvalidRegionError(DataError):
    """A bounding box or patch does not lie inside the image."""


class TooSmallError(DataError):
    """An image is smaller than the minimum size an operation needs."""


class InsufficientDataError(DataError):
    pass


class SingularCovarianceError(DataError):
    """Cholesky factorization of the background covariance failed."""


class DegenerateTriangleError(DataError):
    """Two or more triangle vertices coincide."""


class DegenerateDetectorError(DataError):
    """A detector produced no valid detection on any evaluation image."""


class DegenerateTrainingError(DataError):
    """Training data covers fewer than two classes."""


class ShapeError(DataError):
    pass


class FormatVersionError(DataError):
    """A model file was written by an incompatible format version."""
