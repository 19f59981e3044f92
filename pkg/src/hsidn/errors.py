"""Exception hierarchy shared by every hsidn module."""


class HsiError(Exception):
    """Base class for all hsidn errors."""


class DimensionMismatch(HsiError, ValueError):
    pass


class NonFiniteValue(HsiError, ValueError):
    pass


class EmptyInput(HsiError, ValueError):
    pass


class NegativeThreshold(HsiError, ValueError):
    pass


class NonpositiveRho(HsiError, ValueError):
    pass


class NonpositiveParameter(HsiError, ValueError):
    pass


class RankOutOfRange(HsiError, ValueError):
    pass


class RankDeficientWarning(UserWarning):
    """Procrustes input is (numerically) rank deficient; the SVD solution is still returned."""


class InvalidParams(HsiError, ValueError):
    pass


class NegativeVariance(HsiError, ValueError):
    pass


class FractionOutOfRange(HsiError, ValueError):
    pass


class UnknownCase(HsiError, ValueError):
    pass


class UnknownSweep(HsiError, ValueError):
    pass


class NonFiniteState(HsiError, RuntimeError):
    """Raised when an ADMM variable stops being finite."""

    def __init__(self, iteration: int, variable: str):
        self.iteration = iteration
        self.variable = variable
        super().__init__(f"non-finite value in {variable} at iteration {iteration}")


# -- persistence -------------------------------------------------------------


class HsrFormatError(HsiError, ValueError):
    pass


class BadMagic(HsrFormatError):
    pass


class UnsupportedVersion(HsrFormatError):
    pass


class UnsupportedDtype(HsrFormatError):
    pass


class PayloadSizeMismatch(HsrFormatError):
    pass


class TruncatedPayload(PayloadSizeMismatch):
    pass


class DimOverflow(HsrFormatError):
    pass


class IoFailure(HsiError, OSError):
    pass


class ConfigError(HsiError, ValueError):
    pass


class ParseError(ConfigError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)


class UnknownPreset(ConfigError):
    pass
