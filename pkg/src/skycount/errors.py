"""Exception hierarchy shared by all modules.

Two broad categories map onto CLI exit codes: ``DataError`` (malformed or
insufficient input, exit 2) and ``NumericError`` (a computation has no
defined result, exit 3).
"""


class SkycountError(Exception):
    exit_code = 2


class DataError(SkycountError):
    exit_code = 2


class NumericError(SkycountError):
    exit_code = 3


class InvalidCoordinateError(DataError):
    """Longitude/latitude outside the WGS84 value range."""


class DegenerateBoxError(DataError):
    """Bounding box with zero area where a positive area is required."""


class ZeroDenominatorError(NumericError):
    """Count-error denominator (sum of true counts) is zero."""


class ZeroTruthCountError(NumericError):
    """Per-image relative error requested for images with zero true count."""

    def __init__(self, image_ids):
        self.image_ids = list(image_ids)
        super().__init__(
            "per-image relative error undefined for images with zero true "
            "count: %s" % ", ".join(str(i) for i in self.image_ids)
        )


class ZeroMeanError(NumericError):
    """Normalization requested for a station-year whose mean count is zero."""


class EmptyInputError(DataError):
    """An operation that needs at least one observation got none."""


class InsufficientDataError(DataError):
    """Not enough complete days anywhere to apply the AASHTO method."""


class UnknownPlazaError(DataError):
    """Toll plaza missing from the milepost table."""


class UnknownVehicleClassError(DataError):
    """Vehicle class code not covered by the rule (strict mode only)."""


class SingularFitError(NumericError):
    """Regression design is rank-deficient even after regularization."""


class InfeasibleModelError(NumericError):
    """Factor model predicts negative values somewhere on the time grid."""


class MissingResidualCellError(NumericError):
    """Residual bank has no residuals for the requested (DOW, hour) cell."""


class DomainError(NumericError):
    """Input outside the mathematical domain of the operation."""


class ConfigError(DataError):
    """Missing or inconsistent configuration (paths, speeds, units)."""
