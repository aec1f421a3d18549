"""Exception types raised across the package."""


class PixelCEError(Exception):
    """Base class for all package errors."""


class SingularNetwork(PixelCEError):
    """The ON-port impedance block cannot be solved reliably."""


class ZeroPattern(PixelCEError):
    """A coder produced a radiation pattern with (numerically) zero norm."""


class TooManyPaths(PixelCEError):
    pass


class ShapeMismatch(PixelCEError, ValueError):
    pass


class InsufficientPool(PixelCEError):
    """Fewer valid candidate patterns than requested pilots."""


class RankTooLarge(PixelCEError):
    pass


class NumericalFailure(PixelCEError):
    pass


class ZeroTruth(PixelCEError, ValueError):
    pass


class MatrixFormatError(PixelCEError, ValueError):
    """A matrix/support/coder text file could not be parsed or has the wrong shape."""


class ConfigError(PixelCEError, ValueError):
    pass
