"""Plot an occupancy CSV as buffer level over time, one line per node."""

import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from qkdsim.capture import read_occupancy

parser = argparse.ArgumentParser()
parser.add_argument("csv", type=Path)
parser.add_argument("-o", "--output", type=Path, default=Path("occupancy.png"))
parser.add_argument("--threshold", type=int)
parser.add_argument("--max", type=int, dest="max_bytes")
args = parser.parse_args()

series = {}
for s in read_occupancy(args.csv.read_text()):
    xs, ys = series.setdefault(s.node, ([], []))
    xs.append(s.time / 1e9)
    ys.append(s.m_current)

fig, ax = plt.subplots(figsize=(9, 4))
for node, (xs, ys) in series.items():
    ax.step(xs, ys, where="post", label=node)
if args.threshold is not None:
    ax.axhline(args.threshold, ls="--", c="gray", label="THRESHOLD")
if args.max_bytes is not None:
    ax.axhline(args.max_bytes, ls=":", c="red", label="MAX")
ax.set_xlabel("simulated time (s)")
ax.set_ylabel("key material (bytes)")
ax.legend()
fig.tight_layout()
fig.savefig(args.output)
print(f"wrote {args.output}")
