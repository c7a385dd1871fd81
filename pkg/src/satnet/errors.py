"""Exception hierarchy shared by every module."""


class SatnetError(Exception):
    """Base class for all package errors."""


class ValidationError(SatnetError, ValueError):
    """Bad user input. ``field`` names the offending field when known."""

    def __init__(self, message, field=None, errors=None):
        super().__init__(message)
        self.field = field
        self.errors = list(errors) if errors else ([message] if message else [])


class ContractViolation(SatnetError, RuntimeError):
    """A caller broke an operation precondition."""


class ConflictError(SatnetError):
    """Resource is already in use (e.g. an interface that is already linked)."""


class DeliveryError(SatnetError):
    """A frame could not be delivered; ``machine`` names where it stopped."""

    def __init__(self, message, machine=None):
        super().__init__(message)
        self.machine = machine


class StaleWatchError(SatnetError):
    """Watch requested history that has been compacted away."""


class WatchOverflowError(SatnetError):
    """A watcher fell behind and its bounded buffer overflowed."""
