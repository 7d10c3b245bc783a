"""Exception types shared across the package."""


class PVDError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(PVDError):
    """An argument violates a documented precondition."""


class FormatError(PVDError):
    """A byte stream does not conform to one of the binary layouts."""


class ConfigError(PVDError):
    """A configuration document is malformed or violates a constraint."""
