import io

import dpkt
import pytest

from qkdsim.capture import (
    LINKTYPE_USER0,
    OccupancyCsvWriter,
    PcapWriter,
    Recorder,
    TraceWriter,
    read_occupancy,
    read_pcap,
)
from qkdsim.charging import AddKeyMessage
from qkdsim.engine import Engine, seconds
from qkdsim.keybuffer import BufferParams, KeyBuffer


def test_empty_capture_is_global_header_only():
    fh = io.BytesIO()
    PcapWriter(fh)
    data = fh.getvalue()
    assert len(data) == 24
    assert data[:4] == bytes.fromhex("A1B2C3D4")
    header, records = read_pcap(data)
    assert header == dict(version=(2, 4), thiszone=0, sigfigs=0, snaplen=65535, linktype=147)
    assert records == []


def test_record_lengths_and_timestamps():
    fh = io.BytesIO()
    w = PcapWriter(fh)
    w.record_frame(20_259_270_400, bytes(792))
    w.record_frame(20_259_270_999, AddKeyMessage(bytes(500)).encode())
    _, recs = read_pcap(fh.getvalue())
    assert [(r.incl_len, r.orig_len) for r in recs] == [(792, 792), (510, 510)]
    # Nanoseconds truncate to microseconds.
    assert (recs[0].ts_sec, recs[0].ts_usec) == (20, 259270)
    assert (recs[1].ts_sec, recs[1].ts_usec) == (20, 259270)


def test_timestamps_must_not_decrease():
    w = PcapWriter(io.BytesIO())
    w.record_frame(10, b"a")
    with pytest.raises(ValueError):
        w.record_frame(9, b"b")


def test_dpkt_reads_capture():
    fh = io.BytesIO()
    w = PcapWriter(fh)
    frames = [b"QKD1" + bytes(68), AddKeyMessage(b"\x01\x02").encode()]
    for i, f in enumerate(frames):
        w.record_frame(seconds(i + 1), f)
    reader = dpkt.pcap.Reader(io.BytesIO(fh.getvalue()))
    assert reader.datalink() == LINKTYPE_USER0
    got = [(ts, bytes(buf)) for ts, buf in reader]
    assert got == [(1.0, frames[0]), (2.0, frames[1])]


def test_csv_schema():
    fh = io.StringIO()
    w = OccupancyCsvWriter(fh)
    w.record_occupancy(0, "alice", "link0", 51000, "Init")
    assert fh.getvalue() == "time_ns,node,link,m_current,event\n0,alice,link0,51000,Init\n"
    (sample,) = read_occupancy(fh.getvalue())
    assert sample.m_current == 51000


def test_trace_line_format():
    fh = io.StringIO()
    t = TraceWriter(fh)
    t.trace(20_256_000_000, "alice", "QKDBuffer:ReserveKeyMaterial", "Reserved Key with ID 19 of size 720")
    t.trace(0, "-", "Simulator:Init")
    assert fh.getvalue().splitlines() == [
        "+20.256000000s alice QKDBuffer:ReserveKeyMaterial Reserved Key with ID 19 of size 720",
        "+0.000000000s - Simulator:Init",
    ]


def test_recorder_occupancy_rows_follow_buffer():
    engine = Engine()
    rec = Recorder.in_memory(engine)
    buf = KeyBuffer(BufferParams(0, 100_000, 51_200), node="alice", link="link0", observer=rec.buffer_observer)
    buf.init()
    buf.add_key_material(bytes(51000))
    buf.reserve_key(720)
    buf.reserve_key(32)
    rows = list(read_occupancy(rec.csv._fh.getvalue()))
    assert [(r.m_current, r.event) for r in rows] == [(0, "Init"), (51000, "Add"), (50280, "Reserve"), (50248, "Reserve")]


def test_recorder_refill_row():
    engine = Engine()
    rec = Recorder.in_memory(engine)
    buf = KeyBuffer(BufferParams(0, 100_000, 51_200), node="bob", link="link0", observer=rec.buffer_observer)
    buf.add_key_material(bytes(50960))
    buf.add_key_material(bytes(500))
    rows = list(read_occupancy(rec.csv._fh.getvalue()))
    assert rows[-1].m_current == 51460
