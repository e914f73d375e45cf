#!/usr/bin/env python3
"""Print the per-scheme cost comparison and emit the two sweep files.

Uses the published 768-wide attention layer shape (d=3, rank 12, sequence
length 32) and reports the reduction ratios of each contraction scheme
against a dense matrix multiply.
"""

import sys
from pathlib import Path

from ttedge import costmodel

ROOT = Path(__file__).resolve().parents[1]

TABLE_CFG = costmodel.LayerConfig((12, 8, 8), (8, 8, 12), (1,) + (12,) * 5 + (1,), 32)


def main() -> int:
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "runs" / "costmodel"
    out.mkdir(parents=True, exist_ok=True)
    report = costmodel.compare_report(TABLE_CFG)
    print(costmodel.report_csv(report), end="")
    for name, axis, values in (("sweep_workload", "K", [8, 16, 32, 64, 128, 256, 512]),
                               ("sweep_rank", "rank", list(range(1, 49)))):
        points = costmodel.sweep(TABLE_CFG, axis, values)
        (out / f"{name}.json").write_text(costmodel.sweep_json(axis, points))
        (out / f"{name}.csv").write_text(costmodel.sweep_csv(axis, points))
    print(f"sweeps written to {out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
