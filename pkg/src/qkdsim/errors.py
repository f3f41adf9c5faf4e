"""Exception hierarchy shared by all simulator components."""

from __future__ import annotations


class QkdSimError(Exception):
    """Base class for every error raised by the simulator."""


class EngineFinished(QkdSimError):
    """Raised when scheduling on an engine whose run has completed."""


class EventFailure(QkdSimError):
    """An event handler raised; carries the event that was being processed."""

    def __init__(self, event, cause: BaseException):
        self.event = event
        self.cause = cause
        super().__init__(f"handler failed for {event.describe()}: {type(cause).__name__}: {cause}")


class EntropyExhausted(QkdSimError):
    def __init__(self, requested: int, available: int):
        self.requested = requested
        self.available = available
        super().__init__(f"entropy stream exhausted: requested {requested} bytes, {available} available")


class InsufficientKeyMaterial(QkdSimError):
    def __init__(self, requested: int, available: int):
        self.requested = requested
        self.available = available
        super().__init__(f"insufficient key material: requested {requested} bytes, {available} available")


class MissingKey(QkdSimError):
    def __init__(self, key_id: int):
        self.key_id = key_id
        super().__init__(f"no key with ID {key_id}")


class ProtocolError(QkdSimError):
    """Malformed or unrecognised frame on the classical channel."""


class FramingError(ProtocolError):
    """Frame is truncated or its length fields disagree with its size."""


class DesynchronizationError(QkdSimError):
    """A peer referenced a KeyID that the local buffer does not hold."""

    def __init__(self, key_id: int, link: str = ""):
        self.key_id = key_id
        self.link = link
        super().__init__(f"key buffers desynchronized on {link or 'link'}: KeyID {key_id} not present")


class AuthenticationFailure(QkdSimError):
    pass


class EncryptionBlocked(QkdSimError):
    """Not enough key material on one side of the link to protect a packet."""


class ConfigurationError(QkdSimError):
    pass


class ScenarioError(ConfigurationError):
    """Scenario validation failed; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.errors))
