"""Discrete-event simulator of QKD-secured node pairs at the key-management layer."""

from qkdsim.engine import Engine, RunSummary
from qkdsim.entropy import DeterministicSource, ExternalStreamSource, SplitMix64
from qkdsim.keybuffer import BufferParams, KeyBuffer
from qkdsim.scenario import ExitReport, Scenario, load_scenario, parse_scenario, run_scenario

__all__ = [
    "BufferParams",
    "DeterministicSource",
    "Engine",
    "ExitReport",
    "ExternalStreamSource",
    "KeyBuffer",
    "RunSummary",
    "Scenario",
    "SplitMix64",
    "load_scenario",
    "parse_scenario",
    "run_scenario",
]

__version__ = "0.1.0"
