"""
Exception types raised across honeyscope.

Library code raises these; only the command line maps them to exit codes.
"""


class HoneyscopeError(Exception):
    """Base class for every error raised by honeyscope."""


class ShapeError(HoneyscopeError, ValueError):
    pass


class NonFiniteError(HoneyscopeError, FloatingPointError):
    """A NaN or Inf appeared in an op output, a gradient or a loss term."""

    def __init__(self, message, source=None):
        super().__init__(message)
        self.source = source


class CorruptFileError(HoneyscopeError, IOError):
    def __init__(self, message, path=None, offset=None):
        if offset is not None:
            message = f"{message} (offset {offset})"
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path
        self.offset = offset


class UnsupportedVersionError(CorruptFileError):
    pass


class AnnotationError(HoneyscopeError, ValueError):
    def __init__(self, message, line=None, image_id=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
        self.image_id = image_id


class PlacementError(HoneyscopeError, RuntimeError):
    pass


class ConfigError(HoneyscopeError, ValueError):
    pass


class TrainingError(HoneyscopeError, RuntimeError):
    pass
