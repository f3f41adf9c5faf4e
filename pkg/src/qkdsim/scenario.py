"""Scenario files, simulation wiring and the run report.

Scenarios are YAML documents. Parsing is strict: unknown keys are errors and
every problem in the document is reported at once. Durations accept a unit
suffix (``ns``, ``us``, ``ms``, ``s``) or a bare integer number of
nanoseconds.
"""

from __future__ import annotations

import io
import ipaddress
import os
from contextlib import ExitStack
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from qkdsim.apps import ReceiveApplication, SendApplication, TrafficPattern
from qkdsim.capture import Recorder
from qkdsim.charging import ChargingApplication, ChargingConfig, Role, initial_fill
from qkdsim.crypto import AlgSelection, AuthAlg, EncAlg
from qkdsim.engine import Engine, format_duration, parse_duration
from qkdsim.entropy import DROP_STREAM_TAG, MASK64, SplitMix64, derive_seed, make_source
from qkdsim.errors import EventFailure, ScenarioError
from qkdsim.keybuffer import BufferParams, KeyBuffer
from qkdsim.manager import DROP_FILTERS, ClassicalChannel, ErrorRecord, LinkAssociation, QkdManager

LINK_INDEX = 0


@dataclass(frozen=True)
class NodeSpec:
    name: str
    address: str


@dataclass(frozen=True)
class LinkSpec:
    id: str = "link0"
    delay: int = 3_270_400
    drop_probability: float = 0.0
    drop_filter: str = "all"


@dataclass(frozen=True)
class ChargingSpec:
    primary: str
    block_size: int
    check_interval: int


@dataclass(frozen=True)
class EntropySpec:
    kind: str = "deterministic"
    path: str | None = None


@dataclass(frozen=True)
class TrafficSpec:
    sender: str
    pattern: TrafficPattern
    src_port: int = 49153
    dst_port: int = 9


@dataclass(frozen=True)
class OutputSpec:
    pcap: str = "capture.pcap"
    csv: str = "occupancy.csv"
    trace: str = "trace.txt"


@dataclass(frozen=True)
class Scenario:
    seed: int
    duration: int
    nodes: tuple[NodeSpec, NodeSpec]
    link: LinkSpec
    buffer: BufferParams
    charging: ChargingSpec
    crypto: AlgSelection
    traffic: TrafficSpec
    entropy: EntropySpec = EntropySpec()
    outputs: OutputSpec = OutputSpec()

    def with_seed(self, seed: int) -> Scenario:
        return replace(self, seed=seed)

    def node_names(self) -> list[str]:
        return [n.name for n in self.nodes]


# --------------------------------------------------------------------------
# parsing


class _Section:
    """Reads typed values out of one mapping, collecting errors instead of raising."""

    def __init__(self, data: Any, path: str, errors: list[str]):
        self.path = path
        self.errors = errors
        if data is None:
            data = {}
        if not isinstance(data, dict):
            errors.append(f"{path or 'document'} must be a mapping")
            data = {}
        self.data = data
        self.seen: set[str] = set()

    def _key(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def get(self, key: str, required: bool = False, default: Any = None) -> Any:
        self.seen.add(key)
        if key not in self.data:
            if required:
                self.errors.append(f"{self._key(key)} is required")
            return default
        return self.data[key]

    def integer(self, key: str, required: bool = False, default: int | None = None, minimum: int | None = 0):
        value = self.get(key, required, default)
        if value is None:
            return default
        if isinstance(value, bool) or not isinstance(value, int):
            self.errors.append(f"{self._key(key)} must be an integer, got {value!r}")
            return default
        if minimum is not None and value < minimum:
            self.errors.append(f"{self._key(key)} must be >= {minimum}, got {value}")
            return default
        return value

    def duration(self, key: str, required: bool = False, default: int | None = None, positive: bool = False):
        value = self.get(key, required, default)
        if value is None:
            return default
        try:
            ns = parse_duration(value)
        except ValueError as exc:
            self.errors.append(f"{self._key(key)}: {exc}")
            return default
        if ns < 0 or (positive and ns == 0):
            self.errors.append(f"{self._key(key)} must be {'> 0' if positive else '>= 0'}, got {value!r}")
            return default
        return ns

    def string(self, key: str, required: bool = False, default: str | None = None, choices=None):
        value = self.get(key, required, default)
        if value is None:
            return default
        if not isinstance(value, str):
            self.errors.append(f"{self._key(key)} must be a string, got {value!r}")
            return default
        if choices is not None and value not in choices:
            self.errors.append(f"{self._key(key)} must be one of {', '.join(choices)}, got {value!r}")
            return default
        return value

    def number(self, key: str, default: float) -> float:
        value = self.get(key, False, default)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.errors.append(f"{self._key(key)} must be a number, got {value!r}")
            return default
        return float(value)

    def section(self, key: str, required: bool = False) -> _Section:
        return _Section(self.get(key, required, {}), self._key(key), self.errors)

    def finish(self) -> None:
        for key in self.data:
            if key not in self.seen:
                self.errors.append(f"unknown key {self._key(str(key))}")


_ENC_NAMES = {"OTP": EncAlg.OTP, "AES256CTR": EncAlg.AES256CTR, "None": EncAlg.NONE}
_AUTH_NAMES = {"MAC256": AuthAlg.MAC256, "None": AuthAlg.NONE}


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a YAML scenario; raises ScenarioError listing every problem."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError([f"not valid YAML: {exc}"]) from None
    return scenario_from_dict(doc)


def load_scenario(path: str | os.PathLike) -> Scenario:
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


def scenario_from_dict(doc: Any) -> Scenario:
    errors: list[str] = []
    root = _Section(doc, "", errors)

    seed = root.integer("seed", required=True, default=0)
    if seed is not None and seed > MASK64:
        errors.append("seed must fit in 64 bits")
    duration = root.duration("duration", required=True, default=0)

    nodes: list[NodeSpec] = []
    raw_nodes = root.get("nodes", required=True, default=[])
    if not isinstance(raw_nodes, list):
        errors.append("nodes must be a list")
        raw_nodes = []
    elif len(raw_nodes) != 2:
        errors.append(f"nodes must list exactly two nodes, got {len(raw_nodes)}")
    for i, raw in enumerate(raw_nodes):
        sec = _Section(raw, f"nodes[{i}]", errors)
        name = sec.string("name", required=True)
        address = sec.string("address", required=True)
        sec.finish()
        if address is not None:
            try:
                ipaddress.IPv4Address(address)
            except ValueError:
                errors.append(f"nodes[{i}].address {address!r} is not an IPv4 address")
        if name is not None and address is not None:
            nodes.append(NodeSpec(name, address))
    names = [n.name for n in nodes]
    if len(set(names)) != len(names):
        errors.append("node names must be unique")
    addresses = [n.address for n in nodes]
    if len(set(addresses)) != len(addresses):
        errors.append("node addresses must be unique")

    sec = root.section("link")
    link = LinkSpec(
        id=sec.string("id", default="link0"),
        delay=sec.duration("delay", default=LinkSpec.delay),
        drop_probability=sec.number("drop_probability", 0.0),
        drop_filter=sec.string("drop_filter", default="all", choices=DROP_FILTERS),
    )
    sec.finish()
    if not 0.0 <= link.drop_probability <= 1.0:
        errors.append(f"link.drop_probability must be in [0, 1], got {link.drop_probability}")

    sec = root.section("buffer", required=True)
    buffer = BufferParams(
        min_bytes=sec.integer("min_bytes", default=0),
        max_bytes=sec.integer("max_bytes", required=True, default=0),
        threshold_bytes=sec.integer("threshold_bytes", required=True, default=0),
        initial_bytes=sec.integer("initial_bytes", default=0),
    )
    sec.finish()
    errors.extend(buffer.problems())

    sec = root.section("charging", required=True)
    charging = ChargingSpec(
        primary=sec.string("primary", default=names[0] if names else ""),
        block_size=sec.integer("block_size", required=True, default=1, minimum=1),
        check_interval=sec.duration("check_interval", required=True, default=1, positive=True),
    )
    sec.finish()
    if names and charging.primary not in names:
        errors.append(f"charging.primary {charging.primary!r} is not a declared node")

    sec = root.section("crypto")
    enc = sec.string("encryption", default="OTP", choices=tuple(_ENC_NAMES))
    auth = sec.string("authentication", default="MAC256", choices=tuple(_AUTH_NAMES))
    sec.finish()
    crypto = AlgSelection(_ENC_NAMES[enc], _AUTH_NAMES[auth])

    sec = root.section("traffic", required=True)
    sender = sec.string("sender", default=names[0] if names else "")
    count = sec.integer("packet_count", required=True, default=1, minimum=1)
    size = sec.integer("payload_size", required=True, default=0)
    interval = sec.duration("interval", required=True, default=1, positive=True)
    start = sec.duration("start_time", default=0)
    fill = sec.get("payload_fill", default="sequential")
    fill_seed = None
    if isinstance(fill, dict):
        fsec = _Section(fill, "traffic.payload_fill", errors)
        fill_seed = fsec.integer("seed", required=True, default=0)
        fsec.finish()
    elif fill != "sequential":
        errors.append(f"traffic.payload_fill must be 'sequential' or {{seed: N}}, got {fill!r}")
    src_port = sec.integer("src_port", default=49153)
    dst_port = sec.integer("dst_port", default=9)
    sec.finish()
    for key, port in (("src_port", src_port), ("dst_port", dst_port)):
        if port is not None and port > 0xFFFF:
            errors.append(f"traffic.{key} must be < 65536")
    if names and sender not in names:
        errors.append(f"traffic.sender {sender!r} is not a declared node")

    sec = root.section("entropy")
    entropy = EntropySpec(
        kind=sec.string("kind", default="deterministic", choices=("deterministic", "external")),
        path=sec.string("path"),
    )
    sec.finish()
    if entropy.kind == "external" and not entropy.path:
        errors.append("entropy.path is required for an external entropy stream")

    sec = root.section("outputs")
    outputs = OutputSpec(
        pcap=sec.string("pcap", default=OutputSpec.pcap),
        csv=sec.string("csv", default=OutputSpec.csv),
        trace=sec.string("trace", default=OutputSpec.trace),
    )
    sec.finish()
    root.finish()

    if errors:
        raise ScenarioError(errors)
    pattern = TrafficPattern(count, size, interval, start, fill_seed)
    return Scenario(
        seed=seed,
        duration=duration,
        nodes=(nodes[0], nodes[1]),
        link=link,
        buffer=buffer,
        charging=charging,
        crypto=crypto,
        traffic=TrafficSpec(sender, pattern, src_port, dst_port),
        entropy=entropy,
        outputs=outputs,
    )


def scenario_to_dict(s: Scenario) -> dict:
    p = s.traffic.pattern
    entropy = {"kind": s.entropy.kind}
    if s.entropy.path is not None:
        entropy["path"] = s.entropy.path
    return {
        "seed": s.seed,
        "duration": format_duration(s.duration),
        "nodes": [{"name": n.name, "address": n.address} for n in s.nodes],
        "link": {
            "id": s.link.id,
            "delay": format_duration(s.link.delay),
            "drop_probability": s.link.drop_probability,
            "drop_filter": s.link.drop_filter,
        },
        "buffer": asdict(s.buffer),
        "charging": {
            "primary": s.charging.primary,
            "block_size": s.charging.block_size,
            "check_interval": format_duration(s.charging.check_interval),
        },
        "crypto": {
            "encryption": next(k for k, v in _ENC_NAMES.items() if v is s.crypto.encryption),
            "authentication": next(k for k, v in _AUTH_NAMES.items() if v is s.crypto.authentication),
        },
        "traffic": {
            "sender": s.traffic.sender,
            "packet_count": p.packet_count,
            "payload_size": p.payload_size,
            "interval": format_duration(p.interval),
            "start_time": format_duration(p.start_time),
            "payload_fill": "sequential" if p.fill_seed is None else {"seed": p.fill_seed},
            "src_port": s.traffic.src_port,
            "dst_port": s.traffic.dst_port,
        },
        "entropy": entropy,
        "outputs": asdict(s.outputs),
    }


def serialize_scenario(s: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(s), sort_keys=False)


# --------------------------------------------------------------------------
# running


@dataclass
class ExitReport:
    delivered: int = 0
    corrupted: int = 0
    blocked: int = 0
    errors: list[ErrorRecord] = field(default_factory=list)
    final_occupancy: dict[str, int] = field(default_factory=dict)
    sent: int = 0
    reordered: int = 0
    addkey_sent: int = 0
    addkey_dropped: int = 0
    frames_dropped: int = 0
    events_processed: int = 0
    final_time: int = 0
    failure: str | None = None

    @property
    def exit_status(self) -> int:
        return 0 if not self.errors and self.corrupted == 0 and self.failure is None else 1

    def to_dict(self) -> dict:
        out = asdict(self)
        out["exit_status"] = self.exit_status
        return out


class Simulation:
    """All components of one scenario wired to a single engine."""

    def __init__(self, scenario: Scenario, recorder: Recorder | None = None, engine: Engine | None = None):
        s = scenario
        self.scenario = s
        self.engine = engine or Engine()
        self.recorder = recorder or Recorder.in_memory(self.engine)
        rec = self.recorder
        names = s.node_names()
        link_id = s.link.id

        self.buffers = {
            name: KeyBuffer(s.buffer, node=name, link=link_id, observer=rec.buffer_observer) for name in names
        }
        drop_rng = SplitMix64(derive_seed(s.seed ^ DROP_STREAM_TAG, LINK_INDEX))
        self.channel = ClassicalChannel(
            self.engine,
            link_id,
            s.link.delay,
            s.link.drop_probability,
            s.link.drop_filter,
            drop_rng,
            rec.tracer_for("-"),
        )
        self.managers = {
            n.name: QkdManager(self.engine, n.name, n.address, rec.record_frame, rec.tracer_for(n.name))
            for n in s.nodes
        }
        for name in names:
            peer = next(p for p in names if p != name)
            self.managers[name].associate(
                LinkAssociation(link_id, self.buffers[name], self.buffers[peer], s.crypto, self.channel)
            )

        self.primary = s.charging.primary
        self.secondary = next(p for p in names if p != self.primary)
        self.source = make_source(asdict(s.entropy), s.seed, LINK_INDEX)
        self.charging_primary = ChargingApplication(
            self.engine,
            ChargingConfig(Role.PRIMARY, s.charging.block_size, s.charging.check_interval, link_id),
            self.buffers[self.primary],
            self.source,
            lambda frame: self.channel.transmit(self.primary, frame),
            rec.tracer_for(self.primary),
        )
        self.charging_secondary = ChargingApplication(
            self.engine,
            ChargingConfig(Role.SECONDARY, s.charging.block_size, s.charging.check_interval, link_id),
            self.buffers[self.secondary],
            trace=rec.tracer_for(self.secondary),
        )
        self.managers[self.secondary].charging[link_id] = self.charging_secondary

        sender = s.traffic.sender
        receiver = next(p for p in names if p != sender)
        addr = {n.name: n.address for n in s.nodes}
        self.sender = SendApplication(
            self.engine,
            self.managers[sender].send,
            link_id,
            s.traffic.pattern,
            addr[sender],
            addr[receiver],
            s.traffic.src_port,
            s.traffic.dst_port,
            name=f"{sender}/sendapp",
            trace=rec.tracer_for(sender),
        )
        self.receiver = ReceiveApplication(s.traffic.pattern, rec.tracer_for(receiver))
        self.managers[receiver].receiver = self.receiver.receive_app_handle

        self.engine.register("simulator", self._start)
        self.engine.schedule(0, "simulator", "start")

    def _start(self, _payload) -> None:
        s = self.scenario
        trace = self.recorder.tracer_for("-")
        trace("Simulator:Init", f"seed {s.seed} duration {format_duration(s.duration)}")
        for buf in self.buffers.values():
            buf.init()
        initial_fill(self.source, [self.buffers[self.primary], self.buffers[self.secondary]], s.buffer.initial_bytes, trace)
        self.charging_primary.start()
        self.sender.start()

    def run(self) -> ExitReport:
        report = ExitReport()
        if self.scenario.duration > 0:
            try:
                summary = self.engine.run(self.scenario.duration)
                report.events_processed = summary.events_processed
                report.final_time = summary.final_time
            except EventFailure as exc:
                report.failure = str(exc)
                report.final_time = exc.event.fire_time
                self.recorder.tracer.trace(exc.event.fire_time, "-", "Simulator:Abort", str(exc))
        self.recorder.flush()
        errors: list[ErrorRecord] = []
        for m in self.managers.values():
            errors.extend(m.stats.errors)
        errors.sort(key=lambda e: e.time)
        report.errors = errors
        report.delivered = self.receiver.delivered
        report.corrupted = self.receiver.corrupted
        report.reordered = self.receiver.reordered
        report.blocked = self.sender.blocked
        report.sent = self.sender.sent
        report.addkey_sent = self.charging_primary.addkey_sent
        report.addkey_dropped = sum(1 for _, kind, _ in self.channel.dropped if kind == "addkey")
        report.frames_dropped = self.channel.frames_dropped
        report.final_occupancy = {name: buf.m_current for name, buf in self.buffers.items()}
        return report


def output_paths(s: Scenario, out_dir: str | os.PathLike | None = None) -> dict[str, Path]:
    paths = {"pcap": Path(s.outputs.pcap), "csv": Path(s.outputs.csv), "trace": Path(s.outputs.trace)}
    if out_dir is not None:
        paths = {k: Path(out_dir) / p.name for k, p in paths.items()}
    return paths


def run_scenario(s: Scenario, out_dir: str | os.PathLike | None = None) -> ExitReport:
    """Run ``s`` to its duration, writing PCAP, CSV and trace files."""
    paths = output_paths(s, out_dir)
    for p in paths.values():
        p.parent.mkdir(parents=True, exist_ok=True)
    with ExitStack() as stack:
        pcap = stack.enter_context(open(paths["pcap"], "wb"))
        csv_fh = stack.enter_context(open(paths["csv"], "w", encoding="utf-8", newline=""))
        trace_fh = stack.enter_context(open(paths["trace"], "w", encoding="utf-8", newline=""))
        engine = Engine()
        sim = Simulation(s, Recorder(engine, pcap, csv_fh, trace_fh), engine)
        return sim.run()


def run_in_memory(s: Scenario) -> tuple[ExitReport, Simulation, dict[str, bytes]]:
    """Run without touching the filesystem; returns the report, simulation and output bytes."""
    engine = Engine()
    pcap, csv_fh, trace_fh = io.BytesIO(), io.StringIO(), io.StringIO()
    sim = Simulation(s, Recorder(engine, pcap, csv_fh, trace_fh), engine)
    report = sim.run()
    outputs = {
        "pcap": pcap.getvalue(),
        "csv": csv_fh.getvalue().encode(),
        "trace": trace_fh.getvalue().encode(),
    }
    return report, sim, outputs
