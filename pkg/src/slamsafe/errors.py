"""Exception types raised across the package."""


class SlamSafeError(Exception):
    """Base class for all package errors."""


class CollisionError(SlamSafeError):
    """A motion step would cross a wall."""


class RangeError(SlamSafeError, ValueError):
    """An input lies outside its documented range."""


class ConfigError(SlamSafeError, ValueError):
    pass


class FormatError(SlamSafeError, ValueError):
    """A persisted file has the wrong schema or version."""


class DegenerateError(SlamSafeError, ValueError):
    """Labeled data contains a single class."""


class NoPathError(SlamSafeError):
    pass


class StuckError(SlamSafeError):
    """No safe recovery candidate was found for too many consecutive attempts."""


class MissingArtifactError(SlamSafeError, FileNotFoundError):
    pass
