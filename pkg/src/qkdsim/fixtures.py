"""Golden-output fixtures.

Layout of a fixture directory::

    <root>/<name>/scenario.yaml   scenario to run
    <root>/<name>/expected.csv    exact occupancy CSV
    <root>/<name>/expected.trace  exact trace text (omitted for long runs)
    <root>/<name>/manifest.json   {"seed": ..., "trace_sha256": ..., "csv_sha256": ..., "pcap_sha256": ...}

``verify_fixtures`` reruns every scenario with the pinned seed and compares.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from qkdsim.errors import QkdSimError
from qkdsim.scenario import load_scenario, run_in_memory

FIXTURE_FILES = ("scenario.yaml", "expected.csv", "manifest.json")
# Longer traces are pinned by digest only.
MAX_STORED_TRACE = 256 * 1024


@dataclass(frozen=True)
class FixtureResult:
    name: str
    passed: bool
    message: str = ""


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def first_difference(a: bytes, b: bytes) -> int | None:
    for i, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return i
    if len(a) != len(b):
        return min(len(a), len(b))
    return None


def generate_fixture(directory: str | Path) -> dict:
    """(Re)write the expected outputs of the fixture in ``directory`` from its scenario."""
    directory = Path(directory)
    scenario = load_scenario(directory / "scenario.yaml")
    _, _, out = run_in_memory(scenario)
    (directory / "expected.csv").write_bytes(out["csv"])
    trace_path = directory / "expected.trace"
    if len(out["trace"]) <= MAX_STORED_TRACE:
        trace_path.write_bytes(out["trace"])
    elif trace_path.exists():
        trace_path.unlink()
    manifest = {
        "seed": scenario.seed,
        "trace_sha256": sha256(out["trace"]),
        "csv_sha256": sha256(out["csv"]),
        "pcap_sha256": sha256(out["pcap"]),
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest


def verify_fixture(directory: str | Path) -> FixtureResult:
    directory = Path(directory)
    name = directory.name
    missing = [f for f in FIXTURE_FILES if not (directory / f).is_file()]
    if missing:
        return FixtureResult(name, False, f"missing fixture file(s): {', '.join(missing)}")
    try:
        manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
        scenario = load_scenario(directory / "scenario.yaml")
    except (ValueError, QkdSimError) as exc:
        return FixtureResult(name, False, f"cannot load fixture: {exc}")
    if scenario.seed != manifest.get("seed"):
        return FixtureResult(name, False, f"scenario seed {scenario.seed} differs from pinned seed {manifest.get('seed')}")
    _, _, out = run_in_memory(scenario)

    for label, key in (("CSV", "csv"), ("trace", "trace")):
        path = directory / f"expected.{key}"
        if not path.exists():
            continue
        expected = path.read_bytes()
        offset = first_difference(out[key], expected)
        if offset is not None:
            return FixtureResult(name, False, f"{label} diverges from expected.{key} at byte offset {offset}")
    for key in ("csv", "trace", "pcap"):
        digest = sha256(out[key])
        if digest != manifest.get(f"{key}_sha256"):
            return FixtureResult(name, False, f"{key} digest {digest} does not match manifest")
    return FixtureResult(name, True)


def verify_fixtures(root: str | Path) -> list[FixtureResult]:
    root = Path(root)
    if not root.is_dir():
        return [FixtureResult(str(root), False, f"fixture directory {root} does not exist")]
    dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not dirs:
        return [FixtureResult(str(root), False, f"no fixtures found under {root}")]
    return [verify_fixture(d) for d in dirs]
