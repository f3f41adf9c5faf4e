"""Cryptography handler: protects application packets with reserved QKD keys.

Wire layout of a protected frame::

    QkdHeader (72 bytes, big-endian)
      magic        4s   b"QKD1"
      total_len    u32  header + ciphertext
      message_id   u32
      enc_alg      u16  NONE=0, OTP=1, AES256CTR=2
      auth_alg     u16  NONE=0, MAC256=3
      enc_key_id   u64
      auth_key_id  u64
      reserved     8s   zero
      auth_tag     32s
    ciphertext

The tag is HMAC-SHA256 keyed with a 32-byte reserved key, computed over the
header with the tag field zeroed followed by the ciphertext.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import ipaddress
import struct
from dataclasses import dataclass, replace
from typing import Callable, Protocol

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from qkdsim.errors import (
    AuthenticationFailure,
    DesynchronizationError,
    EncryptionBlocked,
    FramingError,
    InsufficientKeyMaterial,
    MissingKey,
)
from qkdsim.keybuffer import KeyBuffer

QKD_MAGIC = b"QKD1"
HEADER_FORMAT = ">4sIIHHQQ8s32s"
HEADER_LEN = struct.calcsize(HEADER_FORMAT)
TAG_LEN = 32
TAG_OFFSET = HEADER_LEN - TAG_LEN
MAC_KEY_LEN = 32
AES_KEY_LEN = 32
# Key-ID field value when the corresponding algorithm is NONE.
NO_KEY = (1 << 64) - 1

TRANSPORT_FORMAT = ">4s4sHHI"
TRANSPORT_LEN = struct.calcsize(TRANSPORT_FORMAT)

assert HEADER_LEN == 72 and TRANSPORT_LEN == 16


class EncAlg(enum.IntEnum):
    NONE = 0
    OTP = 1
    AES256CTR = 2


class AuthAlg(enum.IntEnum):
    NONE = 0
    MAC256 = 3


@dataclass(frozen=True)
class AlgSelection:
    encryption: EncAlg = EncAlg.OTP
    authentication: AuthAlg = AuthAlg.MAC256

    def key_lengths(self, plaintext_len: int) -> tuple[int, int]:
        """Bytes of key needed for (encryption, authentication); 0 means no key."""
        if self.encryption is EncAlg.OTP:
            enc = plaintext_len
        elif self.encryption is EncAlg.AES256CTR:
            enc = AES_KEY_LEN
        else:
            enc = 0
        auth = MAC_KEY_LEN if self.authentication is AuthAlg.MAC256 else 0
        return enc, auth


@dataclass(frozen=True)
class QkdHeader:
    total_len: int
    message_id: int
    enc_alg: int
    auth_alg: int
    enc_key_id: int
    auth_key_id: int
    auth_tag: bytes = bytes(TAG_LEN)

    def pack(self) -> bytes:
        if len(self.auth_tag) != TAG_LEN:
            raise ValueError(f"auth_tag must be {TAG_LEN} bytes")
        return struct.pack(
            HEADER_FORMAT,
            QKD_MAGIC,
            self.total_len,
            self.message_id,
            self.enc_alg,
            self.auth_alg,
            self.enc_key_id,
            self.auth_key_id,
            bytes(8),
            self.auth_tag,
        )

    @classmethod
    def unpack(cls, data: bytes) -> QkdHeader:
        if len(data) < HEADER_LEN:
            raise FramingError(f"frame of {len(data)} bytes is shorter than the {HEADER_LEN}-byte QKD header")
        magic, total_len, message_id, enc_alg, auth_alg, enc_id, auth_id, _reserved, tag = struct.unpack_from(
            HEADER_FORMAT, data
        )
        if magic != QKD_MAGIC:
            raise FramingError(f"bad QKD header magic {magic!r}")
        return cls(total_len, message_id, enc_alg, auth_alg, enc_id, auth_id, tag)


@dataclass(frozen=True)
class AppPacket:
    """Application payload behind a compact synthetic transport header."""

    src_addr: str
    dst_addr: str
    src_port: int
    dst_port: int
    packet_id: int
    payload: bytes = b""

    def pack(self) -> bytes:
        return (
            struct.pack(
                TRANSPORT_FORMAT,
                ipaddress.IPv4Address(self.src_addr).packed,
                ipaddress.IPv4Address(self.dst_addr).packed,
                self.src_port,
                self.dst_port,
                self.packet_id,
            )
            + self.payload
        )

    @classmethod
    def unpack(cls, data: bytes) -> AppPacket:
        if len(data) < TRANSPORT_LEN:
            raise FramingError(f"application packet of {len(data)} bytes lacks a transport header")
        src, dst, sport, dport, pid = struct.unpack_from(TRANSPORT_FORMAT, data)
        return cls(
            str(ipaddress.IPv4Address(src)),
            str(ipaddress.IPv4Address(dst)),
            sport,
            dport,
            pid,
            bytes(data[TRANSPORT_LEN:]),
        )


def otp(data: bytes, key: bytes) -> bytes:
    """Byte-wise XOR of equal-length inputs."""
    if len(data) != len(key):
        raise ValueError(f"OTP key length {len(key)} does not match data length {len(data)}")
    n = len(data)
    return (int.from_bytes(data, "little") ^ int.from_bytes(key, "little")).to_bytes(n, "little")


def mac256(key: bytes, data: bytes) -> bytes:
    """HMAC-SHA256 tag."""
    if len(key) != MAC_KEY_LEN:
        raise ValueError(f"MAC key must be {MAC_KEY_LEN} bytes, got {len(key)}")
    return hmac.new(key, data, hashlib.sha256).digest()


def verify_mac(tag: bytes, key: bytes, data: bytes) -> bool:
    return hmac.compare_digest(tag, mac256(key, data))


def aes256ctr(key: bytes, data: bytes) -> bytes:
    """AES-256 in CTR mode with an all-zero counter block (keys are single-use)."""
    if len(key) != AES_KEY_LEN:
        raise ValueError(f"AES-256 key must be {AES_KEY_LEN} bytes, got {len(key)}")
    ctx = Cipher(algorithms.AES(key), modes.CTR(bytes(16))).encryptor()
    return ctx.update(data) + ctx.finalize()


def _apply_cipher(alg: int, key: bytes, data: bytes) -> bytes:
    if alg == EncAlg.OTP:
        return otp(data, key)
    if alg == EncAlg.AES256CTR:
        return aes256ctr(key, data)
    return data


def _mac_input(header: QkdHeader, ciphertext: bytes) -> bytes:
    return replace(header, auth_tag=bytes(TAG_LEN)).pack() + ciphertext


class KeyedLink(Protocol):
    """What the crypto handler needs from a link association."""

    link_id: str
    local_buffer: KeyBuffer

    def reserve_keys(self, lengths: list[int]) -> list[int]: ...


def _noop_trace(operation: str, details: str) -> None:
    pass


class CryptoHandler:
    def __init__(self, trace: Callable[[str, str], None] = _noop_trace):
        self.trace = trace
        self.next_message_id = 0

    def process_outgoing(self, pkt: AppPacket, link: KeyedLink, algs: AlgSelection) -> bytes:
        """Reserve keys on both ends, encrypt and authenticate ``pkt``; return the frame."""
        plaintext = pkt.pack()
        enc_len, auth_len = algs.key_lengths(len(plaintext))
        wanted = [n for n in (enc_len, auth_len) if n]
        try:
            ids = link.reserve_keys(wanted)
        except InsufficientKeyMaterial as exc:
            self.trace(
                "QKDCrypto:ProcessOutgoingPacket",
                f"blocked PacketID {pkt.packet_id}: need {sum(wanted)} bytes, {exc.available} available",
            )
            raise EncryptionBlocked(f"packet {pkt.packet_id} on {link.link_id}: {exc}") from exc
        ids_iter = iter(ids)
        enc_id = next(ids_iter) if enc_len else NO_KEY
        auth_id = next(ids_iter) if auth_len else NO_KEY
        buf = link.local_buffer

        self.trace("QKDCrypto:ProcessOutgoingPacket", f"ENCRYPTION MODE {int(algs.encryption)}")
        if enc_len:
            ciphertext = _apply_cipher(algs.encryption, buf.fetch_key(enc_id), plaintext)
            buf.delete_key(enc_id)
        else:
            ciphertext = plaintext
        self.trace("QKDCrypto:ProcessOutgoingPacket", "Encryption completed!")

        message_id = self.next_message_id
        self.next_message_id = (self.next_message_id + 1) & 0xFFFFFFFF
        header = QkdHeader(
            HEADER_LEN + len(ciphertext),
            message_id,
            int(algs.encryption),
            int(algs.authentication),
            enc_id,
            auth_id,
        )
        self.trace("QKDCrypto:ProcessOutgoingPacket", f"AUTHENTICATION MODE {int(algs.authentication)}")
        if auth_len:
            tag = mac256(buf.fetch_key(auth_id), _mac_input(header, ciphertext))
            buf.delete_key(auth_id)
            header = replace(header, auth_tag=tag)
            self.trace("QKDCrypto:ProcessOutgoingPacket", f"Adding AUTHTAG {tag[:16].hex().upper()} {len(tag)}")
        frame = header.pack() + ciphertext
        self.trace(
            "QKDCrypto:ProcessOutgoingPacket",
            f"Final outgoing packet PacketID {pkt.packet_id} size {len(frame)} MessageID {message_id}"
            f" Encryption KeyID {_fmt_id(enc_id)} Auth KeyID {_fmt_id(auth_id)}",
        )
        return frame

    def process_incoming(self, frame: bytes, link: KeyedLink) -> AppPacket:
        """Verify and decrypt a frame with keys from the local buffer, deleting them."""
        header = QkdHeader.unpack(frame)
        if header.total_len != len(frame):
            raise FramingError(f"QKD header announces {header.total_len} bytes, frame has {len(frame)}")
        ciphertext = bytes(frame[HEADER_LEN:])
        buf = link.local_buffer
        self.trace(
            "QKDCrypto:ProcessIncomingPacket",
            f"MessageID {header.message_id} size {len(frame)} link {link.link_id}",
        )

        if header.auth_alg == AuthAlg.MAC256:
            key = self._take_key(buf, header.auth_key_id, link)
            if not verify_mac(header.auth_tag, key, _mac_input(header, ciphertext)):
                if header.enc_alg != EncAlg.NONE and header.enc_key_id in buf.key_ids():
                    buf.delete_key(header.enc_key_id)
                raise AuthenticationFailure(
                    f"tag mismatch on {link.link_id} for MessageID {header.message_id}"
                    f" (auth KeyID {header.auth_key_id})"
                )
        elif header.auth_alg != AuthAlg.NONE:
            raise FramingError(f"unknown authentication algorithm {header.auth_alg}")

        if header.enc_alg in (EncAlg.OTP, EncAlg.AES256CTR):
            key = self._take_key(buf, header.enc_key_id, link)
            if header.enc_alg == EncAlg.OTP and len(key) != len(ciphertext):
                raise DesynchronizationError(header.enc_key_id, link.link_id)
            plaintext = _apply_cipher(header.enc_alg, key, ciphertext)
        elif header.enc_alg == EncAlg.NONE:
            plaintext = ciphertext
        else:
            raise FramingError(f"unknown encryption algorithm {header.enc_alg}")

        pkt = AppPacket.unpack(plaintext)
        self.trace("QKDCrypto:ProcessIncomingPacket", f"Decryption completed! PacketID {pkt.packet_id}")
        return pkt

    @staticmethod
    def _take_key(buf: KeyBuffer, key_id: int, link: KeyedLink) -> bytes:
        try:
            key = buf.fetch_key(key_id)
        except MissingKey:
            raise DesynchronizationError(key_id, link.link_id) from None
        buf.delete_key(key_id)
        return key


def _fmt_id(key_id: int) -> str:
    return "-" if key_id == NO_KEY else str(key_id)
