"""Exception taxonomy shared across the package.

Every error raised on purpose derives from TouchMpcError so callers (and the
CLI) can map failures to exit categories without string matching.
"""


class TouchMpcError(Exception):
    """Base class for all package errors."""


class DimensionError(TouchMpcError):
    """Array shapes disagree with what an operation requires."""


class InvalidInputError(TouchMpcError):
    """A value violates an operation's precondition (non-finite, empty, ...)."""


class CorruptedStateError(TouchMpcError):
    """A simulator state violates its own invariants."""


class TaskMismatchError(TouchMpcError):
    """An operation was called on an environment of the wrong task type."""


class NotVisibleError(TouchMpcError):
    """The queried object lies outside the sensor's field of view."""


class FormatError(TouchMpcError):
    """Base class for on-disk format problems."""


class MagicError(FormatError):
    """A file does not start with the expected magic bytes."""


class VersionError(FormatError):
    """A file's format version is not supported."""


class TruncatedError(FormatError):
    """A file ended before all declared payload bytes were read."""


class ChecksumError(FormatError):
    """Stored and recomputed checksums disagree."""


class ConsistencyError(FormatError):
    """A manifest's claims disagree with the files actually present."""


class InvalidSplitError(TouchMpcError):
    """A dataset split would leave one side empty."""


class HorizonError(TouchMpcError):
    """A prediction request exceeds the configured horizon cap."""


class InvariantError(TouchMpcError):
    """Model tensors violate their normalization invariants."""


class TrainingDivergedError(TouchMpcError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


class NoContactError(TouchMpcError):
    """An image carries no detectable contact signal."""


class PlanningFailedError(TouchMpcError):
    """Every candidate plan scored a non-finite cost."""


class InvalidGoalError(TouchMpcError):
    """A requested goal configuration is unreachable or out of bounds."""


class ConfigError(TouchMpcError):
    """A configuration file or value is malformed."""
