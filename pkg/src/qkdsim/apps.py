"""Synthetic traffic source and end-to-end integrity checking sink."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable

from qkdsim.crypto import AppPacket
from qkdsim.engine import Engine
from qkdsim.entropy import DeterministicSource
from qkdsim.errors import ConfigurationError, EncryptionBlocked


@dataclass(frozen=True)
class TrafficPattern:
    packet_count: int
    payload_size: int
    interval: int
    start_time: int = 0
    # None means sequential fill; an integer selects a seeded SplitMix64 fill.
    fill_seed: int | None = None

    def __post_init__(self):
        if self.packet_count < 1:
            raise ConfigurationError("packet_count must be >= 1")
        if self.payload_size < 0:
            raise ConfigurationError("payload_size must be >= 0")
        if self.interval <= 0:
            raise ConfigurationError("interval must be > 0")

    def payload(self, packet_id: int) -> bytes:
        """Deterministic payload for ``packet_id``; both ends compute it independently."""
        n = self.payload_size
        if n == 0:
            return b""
        if self.fill_seed is None:
            return bytes((packet_id + i) & 0xFF for i in range(n))
        return DeterministicSource(self.fill_seed ^ packet_id).generate_stream(n)


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


class SendApplication:
    def __init__(
        self,
        engine: Engine,
        send: Callable[[AppPacket, str], None],
        link_id: str,
        pattern: TrafficPattern,
        src_addr: str,
        dst_addr: str,
        src_port: int = 49153,
        dst_port: int = 9,
        name: str = "sender",
        trace: Callable[[str, str], None] | None = None,
    ):
        self.engine = engine
        self._send = send
        self.link_id = link_id
        self.pattern = pattern
        self.src_addr = src_addr
        self.dst_addr = dst_addr
        self.src_port = src_port
        self.dst_port = dst_port
        self.name = name
        self.trace = trace or (lambda op, details: None)
        self.next_packet_id = 0
        self.sent = 0
        self.blocked = 0
        self.sent_digests: dict[int, bytes] = {}
        engine.register(name, lambda _payload: self.send_app_tick())

    @property
    def remaining(self) -> int:
        return self.pattern.packet_count - self.sent

    def start(self) -> None:
        delay = max(self.pattern.start_time - self.engine.now(), 0)
        self.engine.schedule(delay, self.name, "tick")

    def send_app_tick(self) -> None:
        if self.remaining <= 0:
            return
        pid = self.next_packet_id
        payload = self.pattern.payload(pid)
        pkt = AppPacket(self.src_addr, self.dst_addr, self.src_port, self.dst_port, pid, payload)
        try:
            self._send(pkt, self.link_id)
        except EncryptionBlocked as exc:
            self.blocked += 1
            self.trace("SendApplication:Blocked", f"PacketID {pid} retry in next interval: {exc}")
        else:
            self.sent_digests[pid] = digest(payload)
            self.sent += 1
            self.next_packet_id += 1
            self.trace("SendApplication:Send", f"PacketID {pid} payload {len(payload)} bytes")
        if self.remaining > 0:
            self.engine.schedule(self.pattern.interval, self.name, "tick")


class ReceiveApplication:
    """Checks every delivered payload against what the pattern says it should be."""

    def __init__(self, pattern: TrafficPattern, trace: Callable[[str, str], None] | None = None):
        self.pattern = pattern
        self.trace = trace or (lambda op, details: None)
        self.delivered = 0
        self.corrupted = 0
        self.reordered = 0
        self._highest: int | None = None
        self.received_ids: list[int] = []

    def receive_app_handle(self, pkt: AppPacket, link_id: str = "") -> None:
        expected = digest(self.pattern.payload(pkt.packet_id))
        if digest(pkt.payload) == expected:
            self.delivered += 1
            self.trace("ReceiveApplication:Receive", f"PacketID {pkt.packet_id} intact")
        else:
            self.corrupted += 1
            self.trace("ReceiveApplication:Receive", f"PacketID {pkt.packet_id} CORRUPTED")
        if self._highest is not None and pkt.packet_id < self._highest:
            self.reordered += 1
        else:
            self._highest = pkt.packet_id
        self.received_ids.append(pkt.packet_id)
