"""Exception types raised across the package."""


class QRobotError(Exception):
    """Base class for all package errors."""


class RangeError(QRobotError, ValueError):
    """A basis field or index lies outside its declared range."""

    def __init__(self, field, value, lo, hi):
        self.field = field
        self.value = value
        super().__init__(f"{field}={value!r} outside [{lo}, {hi}]")


class ConfigError(QRobotError, ValueError):
    """Invalid model or scenario configuration; ``field`` names the culprit."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class DegenerateInputError(QRobotError, ValueError):
    pass


class DimensionMismatchError(QRobotError, ValueError):
    pass


class BijectionError(QRobotError, ValueError):
    """A rule table or index map is not injective.

    ``pair`` holds two colliding input indices, ``target`` the shared output.
    """

    def __init__(self, message, pair=None, target=None):
        self.pair = pair
        self.target = target
        super().__init__(message)


class PreconditionError(QRobotError, ValueError):
    pass


class PathLimitError(QRobotError, RuntimeError):
    pass


class SizeLimitError(QRobotError, ValueError):
    """A dense construction was requested above its dimension guard."""
