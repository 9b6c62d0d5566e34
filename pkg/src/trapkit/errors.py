"""Exception types shared across the toolkit."""


class TrapkitError(Exception):
    """Base class for all domain errors raised by trapkit."""


class HeaderError(TrapkitError):
    """A delimited input file has a missing or malformed header row."""


class LabelNotFoundError(TrapkitError, LookupError):
    """A label id does not resolve in the taxonomy table."""


class SplitError(TrapkitError):
    """A train/eval split cannot be produced or is unsafe to export."""
