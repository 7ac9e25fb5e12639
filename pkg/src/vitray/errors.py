"""Exception hierarchy shared across the package.

Every error raised on purpose derives from VitrayError so the CLI can map
failures to a one-line ``ClassName: message`` report and a nonzero exit code.
"""


class VitrayError(Exception):
    """Base class for all errors raised by vitray."""


class ShapeError(VitrayError):
    """Operands have incompatible shapes for the requested operation."""


class NumericError(VitrayError):
    """A computation produced or received non-finite values."""


class ConfigError(VitrayError):
    """A configuration value violates its constraints."""


class UsageError(VitrayError):
    """An API was called in an unsupported way."""


class DataError(VitrayError):
    """An input file or data record is malformed or inconsistent."""


class NotFittedError(UsageError):
    """An estimator method requiring a fitted model was called before fit."""
