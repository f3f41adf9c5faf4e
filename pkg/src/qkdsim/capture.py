"""Run outputs: PCAP of classical-channel frames, occupancy CSV and a text trace.

The PCAP uses the classic libpcap format written big-endian (the file starts
with A1 B2 C3 D4), microsecond timestamps and link type USER0, with each
simulator frame stored raw.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterator, TextIO

from qkdsim.engine import NS_PER_SECOND, format_time

PCAP_MAGIC = 0xA1B2C3D4
PCAP_VERSION = (2, 4)
PCAP_SNAPLEN = 65535
LINKTYPE_USER0 = 147
_GLOBAL = struct.Struct(">IHHiIII")
_RECORD = struct.Struct(">IIII")

CSV_COLUMNS = ("time_ns", "node", "link", "m_current", "event")


class PcapWriter:
    def __init__(self, fh: BinaryIO):
        self._fh = fh
        self._last_ts = 0
        self.records = 0
        fh.write(_GLOBAL.pack(PCAP_MAGIC, *PCAP_VERSION, 0, 0, PCAP_SNAPLEN, LINKTYPE_USER0))

    def record_frame(self, time_ns: int, frame: bytes) -> None:
        if time_ns < self._last_ts:
            raise ValueError("PCAP record timestamps must not decrease")
        if len(frame) > PCAP_SNAPLEN:
            raise ValueError(f"frame of {len(frame)} bytes exceeds snaplen {PCAP_SNAPLEN}")
        self._last_ts = time_ns
        ts_sec, rem = divmod(time_ns, NS_PER_SECOND)
        self._fh.write(_RECORD.pack(ts_sec, rem // 1000, len(frame), len(frame)))
        self._fh.write(frame)
        self.records += 1

    def flush(self) -> None:
        self._fh.flush()


@dataclass(frozen=True)
class PcapRecord:
    ts_sec: int
    ts_usec: int
    incl_len: int
    orig_len: int
    data: bytes


def read_pcap(data: bytes) -> tuple[dict, list[PcapRecord]]:
    """Parse a classic PCAP in either byte order; used for inspection and tests."""
    magic = data[:4]
    if magic == b"\xa1\xb2\xc3\xd4":
        order = ">"
    elif magic == b"\xd4\xc3\xb2\xa1":
        order = "<"
    else:
        raise ValueError(f"not a classic pcap file (magic {magic.hex()})")
    _, major, minor, zone, sigfigs, snaplen, linktype = struct.unpack_from(order + "IHHiIII", data)
    header = dict(version=(major, minor), thiszone=zone, sigfigs=sigfigs, snaplen=snaplen, linktype=linktype)
    records = []
    offset = _GLOBAL.size
    while offset < len(data):
        ts_sec, ts_usec, incl, orig = struct.unpack_from(order + "IIII", data, offset)
        offset += _RECORD.size
        records.append(PcapRecord(ts_sec, ts_usec, incl, orig, data[offset : offset + incl]))
        offset += incl
    return header, records


class OccupancyCsvWriter:
    def __init__(self, fh: TextIO):
        self._writer = csv.writer(fh, lineterminator="\n")
        self._fh = fh
        self._writer.writerow(CSV_COLUMNS)

    def record_occupancy(self, time_ns: int, node: str, link: str, m_current: int, event: str) -> None:
        self._writer.writerow((time_ns, node, link, m_current, event))

    def flush(self) -> None:
        self._fh.flush()


@dataclass(frozen=True)
class OccupancySample:
    time: int
    node: str
    link: str
    m_current: int
    event: str


def read_occupancy(text: str) -> Iterator[OccupancySample]:
    rows = csv.DictReader(io.StringIO(text))
    for row in rows:
        yield OccupancySample(int(row["time_ns"]), row["node"], row["link"], int(row["m_current"]), row["event"])


class TraceWriter:
    def __init__(self, fh: TextIO):
        self._fh = fh

    def trace(self, time_ns: int, node: str, operation: str, details: str = "") -> None:
        line = f"{format_time(time_ns)} {node} {operation}"
        if details:
            line += f" {details}"
        self._fh.write(line + "\n")

    def flush(self) -> None:
        self._fh.flush()


class Recorder:
    """Bundle of the three output writers bound to one engine clock."""

    def __init__(self, engine, pcap: BinaryIO, csv_fh: TextIO, trace_fh: TextIO):
        self.engine = engine
        self.pcap = PcapWriter(pcap)
        self.csv = OccupancyCsvWriter(csv_fh)
        self.tracer = TraceWriter(trace_fh)

    @classmethod
    def in_memory(cls, engine) -> Recorder:
        return cls(engine, io.BytesIO(), io.StringIO(), io.StringIO())

    def record_frame(self, time_ns: int, link: str, frame: bytes) -> None:
        self.pcap.record_frame(time_ns, frame)

    def tracer_for(self, node: str):
        def trace(operation: str, details: str = "") -> None:
            self.tracer.trace(self.engine.now(), node, operation, details)

        return trace

    def buffer_observer(self, buffer, event: str, info: dict) -> None:
        """KeyBuffer observer: CSV row per mutation, trace line per operation."""
        now = self.engine.now()
        node = buffer.node
        if event == "init":
            self.csv.record_occupancy(now, node, buffer.link, info["m_current"], "Init")
            self.tracer.trace(now, node, "QKDBuffer:Init", f"link {buffer.link} m_current {info['m_current']}")
        elif event == "add":
            self.tracer.trace(
                now,
                node,
                "QKDBuffer:AddKeyMaterial",
                f"m_Mcurrent {info['before']} size {info['size']} key material[0-8] {info['head'].hex().upper()}"
                f" [...] {info['tail'].hex().upper()} m_Mcurrent {info['m_current']}"
                + (f" discarded {info['discarded']}" if info["discarded"] else ""),
            )
            self.csv.record_occupancy(now, node, buffer.link, info["m_current"], "Add")
        elif event == "reserve":
            self.tracer.trace(
                now,
                node,
                "QKDBuffer:ReserveKeyMaterial",
                f"Reserved Key with ID {info['key_id']} of size {info['size']}",
            )
            self.csv.record_occupancy(now, node, buffer.link, info["m_current"], "Reserve")
        elif event == "release":
            self.tracer.trace(
                now, node, "QKDBuffer:ReleaseKeyMaterial", f"Released Key with ID {info['key_id']} of size {info['size']}"
            )
            self.csv.record_occupancy(now, node, buffer.link, info["m_current"], "Release")
        elif event == "fetch":
            self.tracer.trace(
                now, node, "QKDBuffer:FetchKeyByID", f"Fetching Key with ID {info['key_id']} Value {info['head'].hex().upper()}[...]"
            )
        elif event == "delete":
            self.tracer.trace(now, node, "QKDBuffer:DeleteKeyID", f"KeyID {info['key_id']} is deleted from m_keys")
        elif event == "below_min":
            self.tracer.trace(
                now, node, "QKDBuffer:Warning", f"m_current {info['m_current']} below MIN {info['min_bytes']}"
            )

    def flush(self) -> None:
        self.pcap.flush()
        self.csv.flush()
        self.tracer.flush()
