import pytest

from qkdsim.charging import AddKeyMessage, ChargingApplication, ChargingConfig, Role
from qkdsim.crypto import AlgSelection, QkdHeader
from qkdsim.engine import Engine, millis
from qkdsim.entropy import DeterministicSource, SplitMix64
from qkdsim.errors import ConfigurationError, EncryptionBlocked
from qkdsim.keybuffer import KeyBuffer
from qkdsim.manager import ClassicalChannel, LinkAssociation, QkdManager, frame_kind

from helpers import PARAMS, packet

MATERIAL = DeterministicSource(3).generate_stream(51000)


def wired(material=MATERIAL, peer_material=None, drop=0.0, drop_filter="all"):
    engine = Engine()
    frames = []
    channel = ClassicalChannel(engine, "link0", millis(3), drop, drop_filter, SplitMix64(1))
    a = KeyBuffer(PARAMS, node="alice", link="link0")
    b = KeyBuffer(PARAMS, node="bob", link="link0")
    if material:
        a.add_key_material(material)
    peer_material = material if peer_material is None else peer_material
    if peer_material:
        b.add_key_material(peer_material)
    alice = QkdManager(engine, "alice", "10.1.1.1", lambda t, l, f: frames.append((t, "alice", f)))
    bob = QkdManager(engine, "bob", "10.1.1.2", lambda t, l, f: frames.append((t, "bob", f)))
    alice.associate(LinkAssociation("link0", a, b, AlgSelection(), channel))
    bob.associate(LinkAssociation("link0", b, a, AlgSelection(), channel))
    bob.charging["link0"] = ChargingApplication(engine, ChargingConfig(Role.SECONDARY, 500, 1, "link0"), b)
    got = []
    bob.receiver = lambda pkt, link: got.append(pkt)
    return engine, channel, alice, bob, a, b, frames, got


def test_send_mirrors_reservations():
    engine, channel, alice, bob, a, b, frames, got = wired()
    a.next_key_id = b.next_key_id = 19
    alice.send(packet(bytes(704)), "link0")
    assert b.key_ids() == [19, 20]
    assert len(b.fetch_key(19)) == 720 and len(b.fetch_key(20)) == 32
    assert a.m_current == b.m_current == 51000 - 752


def test_send_then_deliver():
    engine, channel, alice, bob, a, b, frames, got = wired()
    pkt = packet(b"hello" * 100)
    alice.send(pkt, "link0")
    engine.run(millis(10))
    assert got == [pkt]
    assert frames[0][0] == millis(3)
    assert a.key_ids() == b.key_ids() == []


def test_peer_short_aborts_atomically():
    engine, channel, alice, bob, a, b, frames, got = wired(peer_material=MATERIAL[:740])
    before = (a.raw_bytes(), b.raw_bytes(), a.next_key_id, b.next_key_id)
    with pytest.raises(EncryptionBlocked):
        alice.send(packet(bytes(704)), "link0")
    assert (a.raw_bytes(), b.raw_bytes(), a.next_key_id, b.next_key_id) == before
    assert a.key_ids() == b.key_ids() == []
    # Buffers stayed in step: a later small packet still works end to end.
    alice.send(packet(b"ok"), "link0")
    engine.run(millis(10))
    assert got[0].payload == b"ok"


def test_send_unknown_link():
    engine, channel, alice, *_ = wired()
    with pytest.raises(ConfigurationError):
        alice.send(packet(b"x"), "nope")


def test_deliver_addkey_grows_secondary():
    engine, channel, alice, bob, a, b, frames, got = wired()
    bob.deliver(AddKeyMessage(bytes(500)).encode(), "link0")
    assert b.m_current == 51500
    assert len(frames) == 1


def test_deliver_garbage_counted_and_logged():
    engine, channel, alice, bob, a, b, frames, got = wired()
    bob.deliver(b"garbage frame", "link0")
    assert len(frames) == 1
    assert [e.kind for e in bob.stats.errors] == ["protocol"]


def test_deliver_bad_addkey_counted():
    engine, channel, alice, bob, a, b, frames, got = wired()
    bob.deliver(b"ADDKEY" + (10).to_bytes(4, "big") + b"short", "link0")
    assert b.m_current == 51000
    assert [e.kind for e in bob.stats.errors] == ["protocol"]


def test_desynced_buffers_raise_auth_error_on_receiver():
    other = DeterministicSource(4).generate_stream(51000)
    engine, channel, alice, bob, a, b, frames, got = wired(peer_material=other)
    alice.send(packet(b"x" * 100), "link0")
    engine.run(millis(10))
    assert got == []
    assert [(e.kind, e.link) for e in bob.stats.errors] == [("authentication", "link0")]


def test_lossy_channel_drops_everything_at_one():
    engine, channel, alice, bob, a, b, frames, got = wired(drop=1.0)
    alice.send(packet(b"x"), "link0")
    engine.run(millis(10))
    assert got == [] and frames == []
    assert channel.frames_dropped == 1


def test_drop_filter_only_addkey():
    engine, channel, alice, bob, a, b, frames, got = wired(drop=1.0, drop_filter="addkey")
    assert channel.transmit("alice", AddKeyMessage(bytes(5)).encode()) is False
    assert channel.transmit("alice", QkdHeader(72, 0, 0, 0, 0, 0).pack()) is True


def test_channel_rejects_bad_probability():
    with pytest.raises(ConfigurationError):
        ClassicalChannel(Engine(), "l", 1, 1.5, rng=SplitMix64(0))


def test_frame_kind():
    assert frame_kind(b"QKD1....") == "data"
    assert frame_kind(b"ADDKEY..") == "addkey"
    assert frame_kind(b"????") == "unknown"


def test_one_association_per_link():
    engine, channel, alice, bob, a, b, *_ = wired()
    with pytest.raises(ConfigurationError):
        alice.associate(LinkAssociation("link0", a, b, AlgSelection(), channel))
