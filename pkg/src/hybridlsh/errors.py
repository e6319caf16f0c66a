"""Exception hierarchy shared by all modules."""


class HybridLSHError(Exception):
    """Base class for errors raised by this package."""


class InputError(HybridLSHError, ValueError):
    """An argument has the wrong representation, shape or range."""


class ConfigError(HybridLSHError, ValueError):
    """Incompatible or invalid configuration (parameters, sketches, families)."""


class FormatError(HybridLSHError, ValueError):
    """A file does not follow the expected on-disk format."""


class ParseError(FormatError):
    """A text data file has a malformed line."""

    def __init__(self, path, lineno: int, message: str):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{self.path}:{lineno}: {message}")
