"""Exception types shared across the package."""


class ResmanError(Exception):
    """Base class for all package errors."""


class PastTimeError(ResmanError):
    """An event was scheduled before the current virtual time."""


class NotHoldingLaneError(ResmanError):
    """A lane-dependent check was applied to a turn that holds no lane."""


class NotTerminalError(ResmanError):
    """A terminal-state metric was requested for a live turn."""


class ConfigInvalidError(ResmanError):
    """A scenario, session, or run configuration failed validation."""


class SessionHibernatedError(ResmanError):
    """An operation was attempted on a hibernated session."""


class CannotFitError(ResmanError):
    """A single irreducible context entry exceeds the window capacity."""


class ChecksumMismatchError(ResmanError):
    """A hibernation image failed checksum validation."""


class VersionUnsupportedError(ResmanError):
    """A hibernation image carries an unknown format version."""


class NotFoundError(ResmanError):
    """A keyed record store lookup missed."""


class IoFailureError(ResmanError):
    """A durable store operation failed at the filesystem level."""


class EmptyRunError(ResmanError):
    """Metrics were requested for a run that produced no data."""


class NotARunError(ResmanError):
    """A report was requested for a directory that is not a run directory."""


class InvariantViolationError(ResmanError):
    """A continuously-checked runtime invariant was violated."""
