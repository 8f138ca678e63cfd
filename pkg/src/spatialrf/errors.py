"""Exception hierarchy.

Every error carries the process exit code the command line front end uses
for it: 2 configuration, 3 data, 4 model/degeneracy, 5 infeasible.
"""


class SpatialRFError(Exception):
    exit_code = 1


class ConfigError(SpatialRFError, ValueError):
    """Invalid arguments, parameters or run configuration."""

    exit_code = 2


class DataError(SpatialRFError, ValueError):
    """Input data could not be read or failed validation."""

    exit_code = 3


class SchemaError(DataError):
    pass


class ParseError(DataError):
    pass


class ValidationError(DataError):
    pass


class FormatError(DataError):
    pass


class OutOfBoundsError(DataError):
    pass


class ExtractionError(DataError):
    pass


class ExpressionError(DataError):
    pass


class DegeneracyError(SpatialRFError, ValueError):
    """A model, partition or metric is undefined for the given data."""

    exit_code = 4


class FeatureMismatchError(DegeneracyError):
    pass


class DegenerateResponseError(DegeneracyError):
    pass


class DegenerateBandError(DegeneracyError):
    pass


class DegeneratePartitionError(DegeneracyError):
    pass


class FoldDegeneracyError(DegeneracyError):
    def __init__(self, message, fold=None):
        super().__init__(message)
        self.fold = fold


class UndefinedMetricError(DegeneracyError):
    pass


class InfeasibleError(SpatialRFError, RuntimeError):
    exit_code = 5


class DesignInfeasibleError(InfeasibleError):
    pass


class SelectionFailureError(InfeasibleError):
    pass
