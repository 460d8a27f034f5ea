class DmkError(Exception):
    """Base class for tracker errors."""


class ValidationError(DmkError):
    """Bad arguments, file contents, or violated invariants (CLI exit 1)."""


class ModelFormatError(ValidationError):
    """Model file failed to parse or validate."""


class ZeroSupportError(DmkError):
    """A kernel window has no pixels with positive weight."""
