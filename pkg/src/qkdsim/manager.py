"""Per-node QKD manager and the classical channel between the two nodes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from qkdsim.charging import ADDKEY_MAGIC, ChargingApplication
from qkdsim.crypto import QKD_MAGIC, AlgSelection, AppPacket, CryptoHandler
from qkdsim.engine import Engine
from qkdsim.entropy import SplitMix64
from qkdsim.errors import (
    AuthenticationFailure,
    ConfigurationError,
    DesynchronizationError,
    InsufficientKeyMaterial,
    ProtocolError,
)
from qkdsim.keybuffer import KeyBuffer

DROP_FILTERS = ("all", "addkey", "data")


def _noop_trace(operation: str, details: str) -> None:
    pass


def frame_kind(frame: bytes) -> str:
    if frame[:4] == QKD_MAGIC:
        return "data"
    if frame[:6] == ADDKEY_MAGIC:
        return "addkey"
    return "unknown"


class ClassicalChannel:
    """Point-to-point link with a fixed propagation delay and optional random loss.

    The loss decision is taken when a frame is sent; dropped frames are never
    scheduled. ``drop_filter`` limits which frames are eligible for loss.
    """

    def __init__(
        self,
        engine: Engine,
        link_id: str,
        delay: int,
        drop_probability: float = 0.0,
        drop_filter: str = "all",
        rng: SplitMix64 | None = None,
        trace: Callable[[str, str], None] = _noop_trace,
    ):
        if not 0.0 <= drop_probability <= 1.0:
            raise ConfigurationError(f"drop_probability {drop_probability} outside [0, 1]")
        if drop_filter not in DROP_FILTERS:
            raise ConfigurationError(f"drop_filter must be one of {DROP_FILTERS}")
        if drop_probability > 0 and rng is None:
            raise ConfigurationError("a lossy channel needs a random generator")
        self.engine = engine
        self.link_id = link_id
        self.delay = delay
        self.drop_probability = drop_probability
        self.drop_filter = drop_filter
        self.rng = rng
        self.trace = trace
        self._endpoints: dict[str, str] = {}
        self.frames_sent = 0
        self.frames_dropped = 0
        self.dropped: list[tuple[int, str, str]] = []

    def attach(self, node: str, target: str) -> None:
        if len(self._endpoints) >= 2 and node not in self._endpoints:
            raise ConfigurationError(f"link {self.link_id} already joins two nodes")
        self._endpoints[node] = target

    def peer_of(self, node: str) -> str:
        others = [n for n in self._endpoints if n != node]
        if len(others) != 1:
            raise ConfigurationError(f"link {self.link_id} has no peer for {node}")
        return others[0]

    def _should_drop(self, kind: str) -> bool:
        if self.drop_probability <= 0.0:
            return False
        if self.drop_filter != "all" and kind != self.drop_filter:
            return False
        # One draw per eligible frame keeps the loss pattern independent of traffic mix.
        return self.rng.next_float() < self.drop_probability

    def transmit(self, src: str, frame: bytes) -> bool:
        """Send ``frame`` from ``src`` to the other endpoint; False if it was lost."""
        dst = self.peer_of(src)
        kind = frame_kind(frame)
        self.frames_sent += 1
        if self._should_drop(kind):
            self.frames_dropped += 1
            self.dropped.append((self.engine.now(), kind, src))
            self.trace("Channel:Drop", f"{kind} frame of {len(frame)} bytes {src}->{dst} on {self.link_id} lost")
            return False
        self.engine.schedule(self.delay, self._endpoints[dst], (self.link_id, bytes(frame)))
        return True


class LinkAssociation:
    """A node's view of one link: its own buffer, the peer's buffer and the channel.

    Reservations touch both buffers from the sending node, mirroring how the
    two ends of a QKD link agree on KeyIDs in this model.
    """

    def __init__(
        self,
        link_id: str,
        local_buffer: KeyBuffer,
        peer_buffer: KeyBuffer,
        algs: AlgSelection,
        channel: ClassicalChannel,
    ):
        self.link_id = link_id
        self.local_buffer = local_buffer
        self.peer_buffer = peer_buffer
        self.algs = algs
        self.channel = channel

    def reserve_keys(self, lengths: list[int]) -> list[int]:
        """Reserve each length on both buffers, local first; all or nothing."""
        done: list[tuple[KeyBuffer, int]] = []
        ids = []
        try:
            for length in lengths:
                local_id = self.local_buffer.reserve_key(length)
                done.append((self.local_buffer, local_id))
                peer_id = self.peer_buffer.reserve_key(length)
                done.append((self.peer_buffer, peer_id))
                if local_id != peer_id:
                    raise DesynchronizationError(local_id, self.link_id)
                ids.append(local_id)
        except (InsufficientKeyMaterial, DesynchronizationError):
            for buf, key_id in reversed(done):
                buf.release_key(key_id)
            raise
        return ids


@dataclass
class ErrorRecord:
    time: int
    node: str
    link: str
    kind: str
    message: str

    def describe(self) -> str:
        return f"{self.kind} on {self.link} at {self.node} (t={self.time}ns): {self.message}"


@dataclass
class ManagerStats:
    sent: int = 0
    received: int = 0
    blocked: int = 0
    errors: list[ErrorRecord] = field(default_factory=list)


class QkdManager:
    def __init__(
        self,
        engine: Engine,
        node: str,
        address: str,
        record_frame: Callable[[int, str, bytes], None] | None = None,
        trace: Callable[[str, str], None] = _noop_trace,
    ):
        self.engine = engine
        self.node = node
        self.address = address
        self.record_frame = record_frame
        self.trace = trace
        self.crypto = CryptoHandler(trace)
        self.associations: dict[str, LinkAssociation] = {}
        self.charging: dict[str, ChargingApplication] = {}
        self.receiver: Callable[[AppPacket, str], None] | None = None
        self.stats = ManagerStats()
        self.target = f"{node}/manager"
        engine.register(self.target, self._on_frame_event)

    def associate(self, assoc: LinkAssociation) -> None:
        if assoc.link_id in self.associations:
            raise ConfigurationError(f"{self.node} already has an association for {assoc.link_id}")
        self.associations[assoc.link_id] = assoc
        assoc.channel.attach(self.node, self.target)

    def _association(self, link_id: str) -> LinkAssociation:
        try:
            return self.associations[link_id]
        except KeyError:
            raise ConfigurationError(f"{self.node} has no association for link {link_id!r}") from None

    def send(self, pkt: AppPacket, link_id: str) -> None:
        """Encrypt ``pkt`` and put it on the link; raises EncryptionBlocked when keys run short."""
        assoc = self._association(link_id)
        frame = self.crypto.process_outgoing(pkt, assoc, assoc.algs)
        self.stats.sent += 1
        assoc.channel.transmit(self.node, frame)

    def _on_frame_event(self, payload: tuple[str, bytes]) -> None:
        link_id, frame = payload
        self.deliver(frame, link_id)

    def _error(self, link_id: str, kind: str, exc: Exception) -> None:
        record = ErrorRecord(self.engine.now(), self.node, link_id, kind, str(exc))
        self.stats.errors.append(record)
        self.trace("QKDManager:Error", record.describe())

    def deliver(self, frame: bytes, link_id: str) -> None:
        """Dispatch a frame that arrived on ``link_id`` by its magic bytes."""
        if self.record_frame is not None:
            self.record_frame(self.engine.now(), link_id, frame)
        kind = frame_kind(frame)
        if kind == "data":
            assoc = self._association(link_id)
            try:
                pkt = self.crypto.process_incoming(frame, assoc)
            except DesynchronizationError as exc:
                self._error(link_id, "desynchronization", exc)
                return
            except AuthenticationFailure as exc:
                self._error(link_id, "authentication", exc)
                return
            except ProtocolError as exc:
                self._error(link_id, "protocol", exc)
                return
            self.stats.received += 1
            if self.receiver is not None:
                self.receiver(pkt, link_id)
        elif kind == "addkey":
            app = self.charging.get(link_id)
            if app is None:
                self._error(link_id, "protocol", ProtocolError(f"{self.node} has no charging application"))
                return
            try:
                app.handle_addkey(frame)
            except ProtocolError as exc:
                self._error(link_id, "protocol", exc)
        else:
            self._error(link_id, "protocol", ProtocolError(f"unknown frame magic {bytes(frame[:6])!r}"))
