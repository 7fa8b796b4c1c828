"""Exception types shared across the package."""


class SmsRakiError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SmsRakiError):
    """Array shapes, dimensions, or channel counts are inconsistent."""


class ParameterError(SmsRakiError):
    """A scalar argument is out of its valid range."""


class ConfigError(SmsRakiError):
    """A network or run configuration violates a constraint."""


class DataError(SmsRakiError):
    """A dataset is empty or too small for the requested operation."""


class CoverageError(SmsRakiError):
    """A required (slice, coil) model is missing."""


class NumericalError(SmsRakiError):
    """A linear solve or numerical routine failed."""


class GroupError(SmsRakiError):
    """A ranking group is empty or contains no usable records."""
