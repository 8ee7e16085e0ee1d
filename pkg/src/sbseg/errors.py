"""Exception types shared across the package."""


class SbsegError(Exception):
    pass


class ConfigError(SbsegError, ValueError):
    """Invalid or unknown configuration value."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class ShapeError(SbsegError, ValueError):
    pass


class DomainError(SbsegError, ValueError):
    pass


class NumericError(SbsegError, ArithmeticError):
    pass


class MissingInstanceError(SbsegError, KeyError):
    pass


class FormatError(SbsegError, ValueError):
    """Malformed binary container; ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


class GenerationError(SbsegError, RuntimeError):
    pass


class DenoiserError(SbsegError, RuntimeError):
    def __init__(self, message, step):
        self.step = step
        super().__init__(message)
