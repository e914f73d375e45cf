#!/usr/bin/env python3
"""Compare memory-block allocation strategies for the full factor inventory.

Builds the 768-wide model, extracts every factor array, and prints the
block totals of ungrouped partitioning, ungrouped reshaping, and the
optimized grouped plan across a sweep of ranks.
"""

import sys

from ttedge.bram import BlockSpec, ideal_blocks, optimize, plan_for
from ttedge.config import TrainConfig, seed_streams
from ttedge.model import TensorTransformer, factor_inventory


def main() -> int:
    spec = BlockSpec()
    print("rank,partition_blocks,reshape_blocks,optimized_blocks,ideal_blocks,efficiency")
    for rank in (4, 8, 12, 16, 24, 32, 48):
        cfg = TrainConfig(tt_rank=rank, epochs=0)
        model = TensorTransformer(cfg, seed_streams(0)["init"])
        arrays = factor_inventory(model)
        part = min(plan_for(arrays, spec, "partition", c, 1).total_blocks
                   for c in spec.configs)
        resh = min(plan_for(arrays, spec, "reshape", c, 1).total_blocks
                   for c in spec.configs)
        plan = optimize(arrays, spec)
        print(f"{rank},{part},{resh},{plan.total_blocks},"
              f"{ideal_blocks(arrays, spec)},{plan.efficiency:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
