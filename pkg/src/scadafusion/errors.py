"""Exception and warning types shared across the package.

Errors fall in three families that the CLI maps onto exit codes:
``ConfigError`` (2), ``DataError`` (3) and ``NumericError`` (4).
"""


class ScadaFusionError(Exception):
    exit_code = 1


class ConfigError(ScadaFusionError):
    exit_code = 2


class DataError(ScadaFusionError):
    exit_code = 3


class NumericError(ScadaFusionError):
    exit_code = 4


# --- DNP3 framing -----------------------------------------------------------

class Dnp3Error(DataError):
    pass


class BadStartBytes(Dnp3Error):
    pass


class CrcMismatch(Dnp3Error):
    """A CRC check failed. ``block`` is -1 for the header, else the data block index."""

    def __init__(self, block):
        super().__init__(f"CRC mismatch in {'header' if block < 0 else f'data block {block}'}")
        self.block = block


class Truncated(Dnp3Error):
    pass


class UnknownFunctionCode(Dnp3Error):
    def __init__(self, code):
        super().__init__(f"unknown DNP3 function code {code}")
        self.code = code


class MalformedObjectHeader(Dnp3Error):
    pass


# --- ingestion / fusion -----------------------------------------------------

class ParseError(DataError):
    def __init__(self, line, msg=""):
        super().__init__(f"line {line}: {msg}" if msg else f"line {line}")
        self.line = line


class UnsortedInput(DataError):
    pass


class MissingWindows(DataError):
    pass


class ColumnNotFound(DataError):
    pass


class ColumnMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class ScenarioError(ConfigError):
    pass


# --- numerics ---------------------------------------------------------------

class NonFiniteInput(NumericError):
    pass


class TooFewRows(NumericError):
    pass


class DegenerateMatrix(NumericError):
    pass


class SingleClassTraining(NumericError):
    pass


class FoldTooSmall(NumericError):
    pass


class KOutOfRange(NumericError):
    pass


class SingleCluster(NumericError):
    pass


class PerplexityTooLarge(NumericError):
    pass


class SingleClassSeed(NumericError):
    pass


# --- warnings ---------------------------------------------------------------

class NonMonotoneTimestamp(UserWarning):
    pass


class DuplicateTimestamp(UserWarning):
    pass


class DisconnectedGraph(UserWarning):
    pass


class ZeroMean(UserWarning):
    pass
