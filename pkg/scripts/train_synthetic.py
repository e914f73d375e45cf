#!/usr/bin/env python3
"""Train the small tensorized transformer on the synthetic task and plot-ready CSVs.

Equivalent to `ttedge train --config configs/synthetic_small.json --out runs/synthetic`,
kept as a script for quick experiment edits.
"""

import sys
from pathlib import Path

from ttedge.cli import main

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else str(ROOT / "runs" / "synthetic")
    sys.exit(main(["train",
                   "--config", str(ROOT / "configs" / "synthetic_small.json"),
                   "--out", out,
                   "--timing"]))
