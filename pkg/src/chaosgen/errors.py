"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """Raised when an argument violates a documented precondition."""


class UnsupportedArchitecture(InvalidArgument):
    """Raised when an operation is called on an architecture it does not support."""


class FormatError(ValueError):
    """Malformed binary input. ``offset`` is the byte position where parsing failed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ChecksumError(FormatError):
    pass


class ConfigError(InvalidArgument):
    """Carries every problem found while validating a run configuration."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))
