"""Exception hierarchy.

Errors are split into data problems (bad input, exit code 2) and numeric
failures (exit code 3) so the CLI can map them without string matching.
"""


class RFKernelError(Exception):
    exit_code = 2


class DataError(RFKernelError, ValueError):
    exit_code = 2


class NumericError(RFKernelError, ArithmeticError):
    exit_code = 3


class EmptyData(DataError):
    pass


class AllCensored(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class InsufficientFeatures(DataError):
    pass


class InvalidLabel(DataError):
    pass


class NoComparablePairs(DataError):
    pass


class SchemaError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NonPositiveSigma(DataError):
    pass


class ZeroVariance(NumericError):
    pass


class LadderExhausted(NumericError):
    pass


class FactorizationFailure(NumericError):
    pass


class NonFiniteObjective(NumericError):
    pass


class CensoringUnattainable(NumericError):
    pass
