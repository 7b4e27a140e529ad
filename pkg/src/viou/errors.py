"""Exception types raised across the package."""


class ViouError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(ViouError, ValueError):
    pass


class DegenerateVector(ViouError, ValueError):
    pass


class ParseError(ViouError, ValueError):
    """Malformed text input. ``lineno`` is 1-based, or None if not line-bound."""

    def __init__(self, message, lineno=None, path=None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}" if where else message)


class RangeError(ParseError):
    """A field parsed but its value violates a record invariant."""


class FormatError(ViouError, ValueError):
    """Binary sidecar with a bad header or inconsistent length."""


class OutOfOrderFrame(ViouError, ValueError):
    pass


class SpecError(ViouError, ValueError):
    pass


class UnknownPreset(ViouError, KeyError):
    pass


class ConfigError(ViouError, ValueError):
    pass
