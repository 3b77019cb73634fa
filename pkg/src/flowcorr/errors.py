"""Exception types shared across the package.

Every error raised on purpose by this package derives from FlowcorrError so
callers can catch one base type. The CLI maps subclasses onto exit codes:
UsageError -> 1, FormatError -> 2, CheckFailure -> 3.
"""

from __future__ import annotations


class FlowcorrError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(FlowcorrError):
    """An array argument has the wrong rank or incompatible shape."""


class ParameterError(FlowcorrError):
    """A scalar or structured parameter violates a documented invariant."""


class FormatError(FlowcorrError):
    """A serialized artifact is malformed.

    Carries the byte offset at which decoding failed when that is known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UsageError(FlowcorrError):
    """The caller asked for an unsupported combination of options."""


class UndefinedMetricError(FlowcorrError):
    """A metric was requested over an empty pixel set."""


class CheckFailure(FlowcorrError):
    """A self-check (for example a gradient check) did not pass."""
