"""Two-tier key store for one end of a link.

Raw key material waits in a FIFO byte queue until a key is *reserved*: the
requested number of bytes is taken from the head of the queue and filed in
the key database under a fresh KeyID. Both ends of a link perform the same
sequence of operations, so equal KeyIDs name equal key bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

from qkdsim.errors import ConfigurationError, InsufficientKeyMaterial, MissingKey

# Observer signature: (buffer, event name, details). Event names are
# "init", "add", "reserve", "release", "fetch", "delete" and "below_min".
Observer = Callable[["KeyBuffer", str, dict], None]


@dataclass(frozen=True)
class BufferParams:
    min_bytes: int
    max_bytes: int
    threshold_bytes: int
    initial_bytes: int = 0

    def problems(self) -> list[str]:
        errors = []
        for name in ("min_bytes", "max_bytes", "threshold_bytes", "initial_bytes"):
            if getattr(self, name) < 0:
                errors.append(f"buffer.{name} must be >= 0")
        if self.min_bytes > self.threshold_bytes:
            errors.append(
                f"buffer.min_bytes ({self.min_bytes}) exceeds buffer.threshold_bytes ({self.threshold_bytes})"
            )
        if self.threshold_bytes > self.max_bytes:
            errors.append(
                f"buffer.threshold_bytes ({self.threshold_bytes}) exceeds buffer.max_bytes ({self.max_bytes})"
            )
        if self.initial_bytes > self.max_bytes:
            errors.append(
                f"buffer.initial_bytes ({self.initial_bytes}) exceeds buffer.max_bytes ({self.max_bytes})"
            )
        return errors

    def validate(self) -> None:
        errors = self.problems()
        if errors:
            raise ConfigurationError("; ".join(errors))


class Occupancy(NamedTuple):
    m_current: int
    below_threshold: bool


class KeyBuffer:
    def __init__(self, params: BufferParams, node: str = "", link: str = "", observer: Observer | None = None):
        params.validate()
        self.params = params
        self.node = node
        self.link = link
        self.observer = observer
        self._raw = bytearray()
        self._keys: dict[int, bytes] = {}
        self.next_key_id = 0
        # Reservations that can still be undone; any add clears it.
        self._undo: list[int] = []
        # Conservation counters.
        self.accepted_total = 0
        self.discarded_total = 0
        self.deleted_total = 0

    def __repr__(self) -> str:
        return f"KeyBuffer(node={self.node!r}, link={self.link!r}, m_current={self.m_current})"

    def _notify(self, event: str, **details) -> None:
        if self.observer is not None:
            self.observer(self, event, details)

    @property
    def m_current(self) -> int:
        return len(self._raw)

    def raw_bytes(self) -> bytes:
        """Copy of the unreserved material, head first."""
        return bytes(self._raw)

    def key_ids(self) -> list[int]:
        return sorted(self._keys)

    def reserved_bytes(self) -> int:
        return sum(len(k) for k in self._keys.values())

    def init(self) -> None:
        """Announce the empty buffer so observers get a starting sample."""
        self._notify("init", m_current=self.m_current)

    def add_key_material(self, material: bytes) -> int:
        """Append material up to MAX; return how many bytes were kept."""
        if not material:
            raise ValueError("key material must be non-empty")
        before = self.m_current
        room = self.params.max_bytes - before
        accepted = material[: max(room, 0)]
        self._raw += accepted
        self._undo.clear()
        self.accepted_total += len(accepted)
        self.discarded_total += len(material) - len(accepted)
        self._notify(
            "add",
            before=before,
            size=len(material),
            accepted=len(accepted),
            discarded=len(material) - len(accepted),
            m_current=self.m_current,
            head=bytes(accepted[:8]),
            tail=bytes(accepted[-8:]),
        )
        return len(accepted)

    def reserve_key(self, length: int) -> int:
        if length < 1:
            raise ValueError(f"key length must be >= 1, got {length}")
        if self.m_current < length:
            raise InsufficientKeyMaterial(length, self.m_current)
        key_id = self.next_key_id
        self._keys[key_id] = bytes(self._raw[:length])
        del self._raw[:length]
        self.next_key_id += 1
        self._undo.append(key_id)
        self._notify("reserve", key_id=key_id, size=length, m_current=self.m_current)
        if self.m_current < self.params.min_bytes:
            self._notify("below_min", m_current=self.m_current, min_bytes=self.params.min_bytes)
        return key_id

    def release_key(self, key_id: int) -> None:
        """Undo the most recent reservation, returning its bytes to the head of the queue.

        Only the newest KeyID can be released, and only if no material was
        added since it was reserved. The ID is handed out again by the next
        reservation, which keeps both ends of a link in step after a failed
        mirrored reservation.
        """
        if not self._undo or self._undo[-1] != key_id or key_id not in self._keys:
            raise MissingKey(key_id)
        self._undo.pop()
        key = self._keys.pop(key_id)
        self._raw[:0] = key
        self.next_key_id -= 1
        self._notify("release", key_id=key_id, size=len(key), m_current=self.m_current)

    def fetch_key(self, key_id: int) -> bytes:
        try:
            key = self._keys[key_id]
        except KeyError:
            raise MissingKey(key_id) from None
        self._notify("fetch", key_id=key_id, head=key[:8])
        return key

    def delete_key(self, key_id: int) -> None:
        try:
            key = self._keys.pop(key_id)
        except KeyError:
            raise MissingKey(key_id) from None
        self.deleted_total += len(key)
        self._notify("delete", key_id=key_id)

    def occupancy(self) -> Occupancy:
        m = self.m_current
        return Occupancy(m, m < self.params.threshold_bytes)
