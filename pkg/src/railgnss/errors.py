"""Exception types raised across the package."""

import numpy as np


class RailGnssError(Exception):
    """Base class for all package errors."""


class ContractViolation(RailGnssError, ValueError):
    """Input violates a documented precondition (shape, sign, emptiness)."""


class DegenerateGeometryError(RailGnssError, ValueError):
    """Coincident points, geocentre inputs and similar degenerate geometry."""


class BelowHorizonError(DegenerateGeometryError):
    """Elevation angle is zero or negative."""


class DegenerateFrequencyError(RailGnssError, ValueError):
    """Dual-frequency combination requested with equal carrier frequencies."""


class NumericalFailure(RailGnssError, ArithmeticError):
    """A computation produced non-finite values or lost positive definiteness.

    ``field`` names the offending quantity and ``epoch`` (when set) the
    filter epoch index at which the failure occurred.
    """

    def __init__(self, message, field=None, epoch=None):
        super().__init__(message)
        self.field = field
        self.epoch = epoch

    def __str__(self):
        msg = super().__str__()
        if self.epoch is not None:
            msg = f"epoch {self.epoch}: {msg}"
        return msg


class SingularMatrixError(NumericalFailure, np.linalg.LinAlgError):
    """A covariance that must be inverted is not positive definite."""


class EmptyMapError(ContractViolation):
    """A track map contains no usable segments."""


class FileFormatError(RailGnssError, ValueError):
    """Malformed input file. ``path`` and ``line`` locate the problem."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = str(path)
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class HeaderError(FileFormatError):
    pass


class MalformedRowError(FileFormatError):
    pass


class NonFiniteFieldError(MalformedRowError):
    pass


class NonMonotoneEpochError(FileFormatError):
    pass
