"""Exception types shared across the package."""


class OmniStereoError(Exception):
    """Base class for all errors raised by omnistereo_gt."""


class DegenerateInputError(OmniStereoError, ValueError):
    """Input is geometrically degenerate (zero vector, empty set, ...)."""


class OutOfBandError(OmniStereoError, ValueError):
    """A polar angle or pixel lies outside the raster's covered band."""


class NumericalError(OmniStereoError, ArithmeticError):
    """A computation produced a non-finite or non-physical result."""


class ParseError(OmniStereoError, ValueError):
    """A text input could not be parsed.

    Attributes:
        path: source file, if known.
        line: 1-based line number of the offending line, if known.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
        if line is not None:
            where = f"{where}:{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)
