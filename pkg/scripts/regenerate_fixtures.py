"""Rewrite expected outputs for every fixture under fixtures/ (review the diff before committing)."""

import sys
from pathlib import Path

from qkdsim.fixtures import generate_fixture

root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "fixtures"
for d in sorted(p for p in root.iterdir() if p.is_dir()):
    manifest = generate_fixture(d)
    print(f"{d.name}: seed {manifest['seed']} pcap {manifest['pcap_sha256'][:16]}")
