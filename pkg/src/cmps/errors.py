"""Exception hierarchy shared by every module."""
from __future__ import annotations


class CMPSError(Exception):
    """Base class for all library errors."""

    #: process exit code used by the command-line tool
    exit_code = 2


class ValidationError(CMPSError, ValueError):
    exit_code = 1

    def __init__(self, message: str = "", path: str | None = None):
        super().__init__(message)
        #: location of the offending field in an input document, if known
        self.path = path


class NumericalError(CMPSError, ArithmeticError):
    exit_code = 2


class DuplicateSpecies(ValidationError):
    pass


class ShapeError(ValidationError):
    pass


class NotHermitian(ValidationError):
    pass


class BadOrder(ValidationError):
    pass


class BadGenerator(ValidationError):
    pass


class GridMismatch(ValidationError):
    pass


class ParseError(ValidationError):
    pass


class ParityRequired(ValidationError):
    pass


class TooLargeForDense(NumericalError):
    pass


class SingularGauge(NumericalError):
    pass


class NonInjective(NumericalError):
    pass


class BadFixedPoint(NumericalError):
    pass


class BadPropagation(NumericalError):
    pass


class IllConditioned(NumericalError):
    pass


class Unstable(NumericalError):
    pass


class GridTooCoarse(NumericalError):
    pass


class SolveFailed(NumericalError):
    pass


class GaugeSingular(NumericalError):
    pass
