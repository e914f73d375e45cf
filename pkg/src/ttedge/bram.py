"""Packing factor arrays into fixed-capacity dual-port memory blocks.

Every block holds ``capacity`` bits, configurable as discrete
``(width, depth)`` pairs with ``width * depth == capacity``. A factor array
needs ``par`` elements read per cycle (rank parallelism), stored as a 2-D
layout of ``depth`` rows of ``par`` elements of ``bw`` bits.

Two strategies satisfy the parallel reads:

* partition: split into ``par`` separate width-1 arrays, one block column
  each, so ``n_w = par * ceil(bw / W)``.
* reshape: widen the word to ``par * bw`` bits, ``n_w = ceil(par * bw / W)``.

Either way ``n_d = ceil(rows / D)``. Since factor arrays are shallow, most
of a block's depth is wasted; grouping concatenates several arrays that are
never read in the same stage (a block has only two ports) along the depth
axis and shares the block column.

Utilization is ``eta = ideal_blocks / total_blocks`` where ``ideal_blocks``
is the capacity-quantized bit total.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

__all__ = [
    "BRAM36_CONFIGS",
    "BlockSpec",
    "FactorArray",
    "Placement",
    "BramPlan",
    "blocks_partitioning",
    "blocks_reshaping",
    "plan_for",
    "optimize",
    "ideal_blocks",
    "arrays_from_manifest",
    "arrays_to_manifest",
    "plan_to_json",
    "plan_summary_csv",
]

# width/depth ladder of a 36 Kb block
BRAM36_CONFIGS = ((1, 32768), (2, 16384), (4, 8192), (9, 4096), (18, 2048), (36, 1024), (72, 512))


@dataclass(frozen=True)
class BlockSpec:
    capacity: int = 36864
    configs: tuple[tuple[int, int], ...] = BRAM36_CONFIGS
    ports: int = 2

    def __post_init__(self):
        # narrow words cannot address the parity bits, so w * d < capacity there
        for w, d in self.configs:
            if not 0 < w * d <= self.capacity:
                raise ValueError(f"config ({w}, {d}) exceeds capacity {self.capacity}")


@dataclass(frozen=True)
class FactorArray:
    """One factor viewed as ``depth`` rows of ``par`` elements of ``bw`` bits.

    Arrays sharing a nonempty ``conflict`` tag are read in the same stage
    and may not share a block group.
    """

    name: str
    bw: int
    par: int
    depth: int
    conflict: str = ""

    @property
    def elems(self) -> int:
        return self.par * self.depth

    @property
    def bits(self) -> int:
        return self.bw * self.elems


def blocks_partitioning(arr: FactorArray, spec: BlockSpec, cfg: tuple[int, int]):
    w, d = _check_cfg(spec, cfg)
    return arr.par * math.ceil(arr.bw / w), math.ceil(arr.depth / d)


def blocks_reshaping(arr: FactorArray, spec: BlockSpec, cfg: tuple[int, int]):
    w, d = _check_cfg(spec, cfg)
    return math.ceil(arr.bw * arr.par / w), math.ceil(arr.depth / d)


def _check_cfg(spec: BlockSpec, cfg) -> tuple[int, int]:
    cfg = (int(cfg[0]), int(cfg[1]))
    if cfg not in spec.configs:
        raise ValueError(f"illegal block configuration {cfg}, legal: {spec.configs}")
    return cfg


def ideal_blocks(arrays, spec: BlockSpec) -> int:
    return max(1, math.ceil(sum(a.bits for a in arrays) / spec.capacity))


@dataclass(frozen=True)
class Placement:
    arrays: tuple[str, ...]
    n_w: int
    n_d: int

    @property
    def blocks(self) -> int:
        return self.n_w * self.n_d


@dataclass(frozen=True)
class BramPlan:
    strategy: str
    group_size: int
    width: int
    depth: int
    placements: tuple[Placement, ...]
    total_blocks: int
    ideal_blocks: int

    @property
    def efficiency(self) -> float:
        return self.ideal_blocks / self.total_blocks


def _n_w(arr: FactorArray, strategy: str, w: int) -> int:
    if strategy == "partition":
        return arr.par * math.ceil(arr.bw / w)
    if strategy == "reshape":
        return math.ceil(arr.bw * arr.par / w)
    raise ValueError(f"unknown strategy {strategy!r}")


def interleave_by_conflict(members: list[FactorArray]) -> list[FactorArray]:
    """Round-robin the arrays across conflict tags.

    Consecutive runs then mix tags, so chunking the result keeps
    co-accessed arrays (same tag) in different groups whenever the group
    size allows it at all. Untagged arrays conflict with nothing and keep
    their order.
    """
    by_tag: dict[str, list[FactorArray]] = {}
    order: list[str] = []
    for i, a in enumerate(members):
        tag = a.conflict if a.conflict else f"#{i}"
        if tag not in by_tag:
            by_tag[tag] = []
            order.append(tag)
        by_tag[tag].append(a)
    out: list[FactorArray] = []
    round_idx = 0
    while len(out) < len(members):
        for tag in order:
            if round_idx < len(by_tag[tag]):
                out.append(by_tag[tag][round_idx])
        round_idx += 1
    return out


def plan_for(arrays, spec: BlockSpec, strategy: str, cfg: tuple[int, int],
             group_size: int) -> BramPlan | None:
    """Block counts for one (strategy, config, group size) choice.

    Arrays are grouped within classes of equal (bw, par), interleaved by
    conflict tag; a group concatenates its members along depth and shares
    one block column. Returns None when a group would co-locate
    conflicting arrays despite the interleaving.
    """
    w, d = _check_cfg(spec, cfg)
    if group_size < 1:
        raise ValueError("group size must be >= 1")
    classes: dict[tuple[int, int], list[FactorArray]] = {}
    for a in arrays:
        classes.setdefault((a.bw, a.par), []).append(a)
    placements = []
    total = 0
    for (bw, par), members in classes.items():
        members = interleave_by_conflict(members)
        n_w = _n_w(members[0], strategy, w)
        for i in range(0, len(members), group_size):
            chunk = members[i:i + group_size]
            tags = [a.conflict for a in chunk if a.conflict]
            if len(chunk) > 1 and len(tags) != len(set(tags)):
                return None  # two co-accessed arrays cannot share two ports
            n_d = math.ceil(sum(a.depth for a in chunk) / d)
            placements.append(Placement(tuple(a.name for a in chunk), n_w, n_d))
            total += n_w * n_d
    return BramPlan(strategy, group_size, w, d, tuple(placements), total,
                    ideal_blocks(arrays, spec))


def optimize(arrays, spec: BlockSpec = BlockSpec(), g_max: int | None = None) -> BramPlan:
    """Exhaustive search over configs, strategies, and group sizes.

    Ties break toward the smaller group size, then the wider word.
    """
    arrays = list(arrays)
    if not arrays:
        raise ValueError("no arrays to place")
    if g_max is None:
        counts: dict[tuple[int, int], int] = {}
        for a in arrays:
            counts[(a.bw, a.par)] = counts.get((a.bw, a.par), 0) + 1
        g_max = max(counts.values())
    best = None
    best_key = None
    for strategy in ("partition", "reshape"):
        for cfg in spec.configs:
            for g in range(1, g_max + 1):
                plan = plan_for(arrays, spec, strategy, cfg, g)
                if plan is None:
                    continue
                key = (plan.total_blocks, plan.group_size, -plan.width, plan.strategy)
                if best is None or key < best_key:
                    best, best_key = plan, key
    if best is None:
        raise ValueError("no feasible plan (conflicting arrays in every grouping)")
    return best


# -- manifest and report IO --------------------------------------------------

def arrays_from_manifest(doc) -> list[FactorArray]:
    if isinstance(doc, str):
        doc = json.loads(doc)
    out = []
    for entry in doc["arrays"]:
        out.append(FactorArray(
            name=entry["name"],
            bw=int(entry["bits_per_elem"]),
            par=int(entry["parallel_reads"]),
            depth=int(entry["depth"]),
            conflict=entry.get("conflict", ""),
        ))
    return out


def arrays_to_manifest(arrays) -> str:
    doc = {"arrays": [
        {"name": a.name, "bits_per_elem": a.bw, "parallel_reads": a.par,
         "depth": a.depth, "conflict": a.conflict}
        for a in arrays
    ]}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def plan_to_json(plan: BramPlan) -> str:
    doc = {
        "strategy": plan.strategy,
        "group_size": plan.group_size,
        "width": plan.width,
        "depth": plan.depth,
        "total_blocks": plan.total_blocks,
        "ideal_blocks": plan.ideal_blocks,
        "efficiency": plan.efficiency,
        "placements": [
            {"arrays": list(p.arrays), "n_w": p.n_w, "n_d": p.n_d}
            for p in plan.placements
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def plan_summary_csv(plan: BramPlan) -> str:
    lines = ["strategy,width,depth,group_size,total_blocks,ideal_blocks,efficiency"]
    lines.append(f"{plan.strategy},{plan.width},{plan.depth},{plan.group_size},"
                 f"{plan.total_blocks},{plan.ideal_blocks},{plan.efficiency:.6g}")
    return "\n".join(lines) + "\n"
