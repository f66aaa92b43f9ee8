"""Exception types raised across the package."""


class SSMHelmError(Exception):
    """Base class for all package errors."""


class InputError(SSMHelmError):
    """Bad or unusable input data (CLI exit code 2)."""


class MissingColumn(InputError):
    pass


class ParseError(InputError):
    def __init__(self, row, column, value):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}: cannot parse {column}={value!r}")


class DuplicateObservation(InputError):
    pass


class TooShort(InputError):
    pass


class MissingFeature(InputError):
    pass


class InsufficientNormals(InputError):
    pass


class EmptyValidation(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class DisjointnessViolation(InputError):
    pass


class LengthMismatch(InputError):
    pass


class InvalidSpec(InputError):
    pass


class ChecksumError(InputError):
    pass


class VersionMismatch(InputError):
    pass


class NumericalFailure(SSMHelmError):
    """A decomposition or estimator failed (CLI exit code 3)."""


class SingularCovariance(NumericalFailure):
    pass


class IoError(SSMHelmError):
    """Reading or writing an output file failed (CLI exit code 4)."""
