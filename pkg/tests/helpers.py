from qkdsim.crypto import AlgSelection, AppPacket
from qkdsim.keybuffer import BufferParams, KeyBuffer
from qkdsim.manager import LinkAssociation

PARAMS = BufferParams(min_bytes=1000, max_bytes=100_000, threshold_bytes=51_200)


def link_pair(material: bytes, algs: AlgSelection = AlgSelection(), params: BufferParams = PARAMS):
    """Sender and receiver associations over two buffers holding the same material."""
    a = KeyBuffer(params, node="alice", link="link0")
    b = KeyBuffer(params, node="bob", link="link0")
    if material:
        a.add_key_material(material)
        b.add_key_material(material)
    tx = LinkAssociation("link0", a, b, algs, channel=None)
    rx = LinkAssociation("link0", b, a, algs, channel=None)
    return tx, rx


def packet(payload: bytes, packet_id: int = 340) -> AppPacket:
    return AppPacket("10.1.1.1", "10.1.1.2", 49153, 9, packet_id, payload)
