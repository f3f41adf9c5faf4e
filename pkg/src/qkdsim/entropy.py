"""Key-material randomness: a seeded SplitMix64 stream or raw bytes from a file/device."""

from __future__ import annotations

import io
import os

import numpy as np

from qkdsim.errors import EntropyExhausted

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

# Seed tag for the classical-channel drop decisions, so they never share a
# stream with the key material of the same link.
DROP_STREAM_TAG = 0xD809_5EED_0000_0000


def mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Scalar SplitMix64 generator producing 64-bit integers."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)

    def next_float(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


def derive_seed(master_seed: int, index: int) -> int:
    """Seed for an independent per-channel stream: one SplitMix64 step on seed XOR index."""
    return SplitMix64((master_seed ^ index) & MASK64).next_u64()


def _splitmix_block(state: int, count: int) -> np.ndarray:
    """``count`` consecutive SplitMix64 outputs after ``state``, vectorised."""
    steps = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(state) + steps * np.uint64(GOLDEN_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return z


class DeterministicSource:
    """SplitMix64 output serialised little-endian, 8 bytes per word.

    Unused bytes of a partially consumed word are kept for the next call, so
    the stream does not depend on how requests are split.
    """

    kind = "deterministic"

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        self._state = self.seed
        self._spill = b""
        self.bytes_served = 0

    def generate_stream(self, n: int) -> bytes:
        if n < 1:
            raise ValueError(f"byte count must be >= 1, got {n}")
        out = self._spill[:n]
        self._spill = self._spill[n:]
        missing = n - len(out)
        if missing:
            words = -(-missing // 8)
            block = _splitmix_block(self._state, words)
            self._state = (self._state + words * GOLDEN_GAMMA) & MASK64
            raw = block.astype("<u8").tobytes()
            out += raw[:missing]
            self._spill = raw[missing:]
        self.bytes_served += n
        return out


class ExternalStreamSource:
    """Raw bytes read from a file or character device standing in for a QRNG."""

    kind = "external"

    def __init__(self, path: str | os.PathLike | None = None, stream: io.BufferedIOBase | None = None):
        if (path is None) == (stream is None):
            raise ValueError("give exactly one of path or stream")
        self.path = None if path is None else os.fspath(path)
        self._stream = stream if stream is not None else open(self.path, "rb")
        self._pending = b""
        self.bytes_served = 0

    def generate_stream(self, n: int) -> bytes:
        if n < 1:
            raise ValueError(f"byte count must be >= 1, got {n}")
        data = self._pending
        while len(data) < n:
            chunk = self._stream.read(n - len(data))
            if not chunk:
                break
            data += chunk
        if len(data) < n:
            self._pending = data
            raise EntropyExhausted(n, len(data))
        self._pending = b""
        self.bytes_served += n
        return data

    def close(self) -> None:
        self._stream.close()


def make_source(spec: dict | None, master_seed: int, channel_index: int):
    """Build the entropy source for one channel from a scenario ``entropy`` block."""
    if spec and spec.get("kind") == "external":
        return ExternalStreamSource(spec["path"])
    return DeterministicSource(derive_seed(master_seed, channel_index))
