"""Exception hierarchy shared by every PackDiT module."""


class PackDiTError(Exception):
    """Base class for all errors raised by packdit."""


class ConfigError(PackDiTError, ValueError):
    """Invalid configuration: unknown preset, bad schedule, malformed recipe file."""


class ValidationError(PackDiTError, ValueError):
    """An input violates an operation's contract (shape, range, pairing)."""


class DataError(PackDiTError, OSError):
    """Dataset or checkpoint files are missing, truncated or malformed."""
