"""Exception hierarchy. Every error raised by the engine derives from ``HierfolioError``."""


class HierfolioError(Exception):
    pass


class DataError(HierfolioError):
    pass


class MissingDate(DataError):
    pass


class NonPositivePrice(DataError):
    pass


class ParseError(DataError):
    pass


class TooShort(DataError):
    pass


class IndexOutOfRange(HierfolioError, IndexError):
    pass


class WindowTooLong(HierfolioError):
    pass


class WindowTooShort(HierfolioError):
    pass


class DegenerateFeatures(HierfolioError):
    pass


class InsolventPortfolio(HierfolioError):
    pass


class MaskMismatch(HierfolioError):
    pass


class NonPositiveValue(HierfolioError):
    pass


class DegenerateExcessReturn(HierfolioError):
    pass


class InvalidBounds(HierfolioError):
    pass


class BlendOutOfRange(HierfolioError):
    pass


class NonPositiveTemperature(HierfolioError):
    pass


class ShapeMismatch(HierfolioError):
    pass


class EmptyMask(HierfolioError):
    pass


class EmptyBatch(HierfolioError):
    pass


class UnknownStrategy(HierfolioError, KeyError):
    pass


class InsufficientHistory(HierfolioError):
    pass


class ZeroVariance(HierfolioError):
    pass


class NoDownside(HierfolioError):
    pass


class ConfigError(HierfolioError):
    pass
