"""Simulated quantum channel.

The Primary end of a link polls its buffer every ``check_interval``; while the
occupancy is strictly below THRESHOLD it draws fresh material from the
entropy source, stores it locally and ships a copy to the Secondary in an
ADDKEY message (6-byte magic, 4-byte big-endian length, payload).
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Callable

from qkdsim.engine import Engine
from qkdsim.errors import ConfigurationError, FramingError, ProtocolError
from qkdsim.keybuffer import KeyBuffer

ADDKEY_MAGIC = b"ADDKEY"
ADDKEY_HEADER_LEN = len(ADDKEY_MAGIC) + 4


class Role(enum.Enum):
    PRIMARY = "primary"
    SECONDARY = "secondary"


@dataclass(frozen=True)
class ChargingConfig:
    role: Role
    block_size: int
    check_interval: int
    link: str

    def __post_init__(self):
        if self.block_size < 1:
            raise ConfigurationError("block_size must be >= 1")
        if self.check_interval <= 0:
            raise ConfigurationError("check_interval must be > 0")


@dataclass(frozen=True)
class AddKeyMessage:
    payload: bytes

    def encode(self) -> bytes:
        return ADDKEY_MAGIC + struct.pack(">I", len(self.payload)) + self.payload

    @property
    def wire_size(self) -> int:
        return ADDKEY_HEADER_LEN + len(self.payload)

    @classmethod
    def decode(cls, frame: bytes) -> AddKeyMessage:
        if frame[: len(ADDKEY_MAGIC)] != ADDKEY_MAGIC:
            raise ProtocolError(f"bad ADDKEY magic {bytes(frame[:6])!r}")
        if len(frame) < ADDKEY_HEADER_LEN:
            raise FramingError(f"ADDKEY frame of {len(frame)} bytes is truncated")
        (length,) = struct.unpack_from(">I", frame, len(ADDKEY_MAGIC))
        payload = bytes(frame[ADDKEY_HEADER_LEN:])
        if len(payload) != length:
            raise FramingError(f"ADDKEY announces {length} payload bytes, frame carries {len(payload)}")
        return cls(payload)


def _noop_trace(operation: str, details: str) -> None:
    pass


class ChargingApplication:
    """One end of the charging pair.

    ``transmit`` hands an encoded ADDKEY frame to the classical channel; only
    the Primary uses it.
    """

    def __init__(
        self,
        engine: Engine,
        config: ChargingConfig,
        buffer: KeyBuffer,
        source=None,
        transmit: Callable[[bytes], object] | None = None,
        trace: Callable[[str, str], None] = _noop_trace,
        name: str = "",
    ):
        if config.role is Role.PRIMARY and (source is None or transmit is None):
            raise ConfigurationError("a Primary charging application needs an entropy source and a transmitter")
        self.engine = engine
        self.config = config
        self.buffer = buffer
        self.source = source
        self.transmit = transmit
        self.trace = trace
        self.name = name or f"{buffer.node}/charging/{config.link}"
        self.addkey_sent = 0
        self.addkey_received = 0
        self.protocol_errors: list[str] = []
        if config.role is Role.PRIMARY:
            engine.register(self.name, lambda _payload: self.on_check_timer())

    def start(self, delay: int = 0) -> None:
        if self.config.role is Role.PRIMARY:
            self.engine.schedule(delay, self.name, "check")

    def on_check_timer(self) -> None:
        if self.config.role is not Role.PRIMARY:
            raise ConfigurationError("threshold checks run on the Primary only")
        try:
            m_current, below = self.buffer.occupancy()
            if below:
                block = min(self.config.block_size, self.buffer.params.max_bytes - m_current)
                self.trace("QKDChargingApplication:PrepareOutput", f"ADDKEY block {block} at m_current {m_current}")
                material = self.source.generate_stream(block)
                self.trace("QKDRandomGenerator:generateStream", f"Requesting {block} bytes: Single call")
                self.buffer.add_key_material(material)
                self.transmit(AddKeyMessage(material).encode())
                self.addkey_sent += 1
                self.trace("QKDChargingApplication:DataSend", f"ADDKEY size {ADDKEY_HEADER_LEN + block}")
        finally:
            # Rescheduling happens even if this check failed, but a failure
            # still aborts the run through the engine.
            if not self.engine.finished:
                self.engine.schedule(self.config.check_interval, self.name, "check")

    def handle_addkey(self, frame: bytes) -> int:
        """Install the payload of an ADDKEY frame; malformed frames are logged and dropped."""
        try:
            msg = AddKeyMessage.decode(frame)
        except ProtocolError as exc:
            self.protocol_errors.append(str(exc))
            self.trace("QKDChargingApplication:HandleRead", f"protocol error: {exc}")
            raise
        self.trace("QKDChargingApplication:ProcessIncomingPacket", f"Adding new key to DstBuffer size {len(msg.payload)}")
        self.addkey_received += 1
        return self.buffer.add_key_material(msg.payload)


def initial_fill(source, buffers: list[KeyBuffer], amount: int, trace: Callable[[str, str], None] = _noop_trace) -> bytes:
    """Generate ``amount`` bytes once and install the same bytes in every buffer."""
    if amount <= 0:
        return b""
    trace("QKDRandomGenerator:generateStream", f"Requesting {amount} bytes: Single call")
    material = source.generate_stream(amount)
    for buf in buffers:
        buf.add_key_material(material)
    return material
