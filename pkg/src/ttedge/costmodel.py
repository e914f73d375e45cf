"""Closed-form multiplication and intra-layer memory counts per scheme.

Schemes for one linear layer of shape (M x N) with workload width K:

* ``mm``: plain dense matrix multiply.
* ``ttm``: order-4 factor chain contracted right-to-left.
* ``tt_rtl``: order-3 factor chain contracted right-to-left.
* ``btt``: order-3 factor chain contracted from both ends toward the
  middle; the first d-1 stages do not touch the workload.

Memory counts are elements of intra-layer intermediates, all of which stay
live for reuse by the backward pass; weights and the layer input/output are
excluded. Reduction ratios compare against ``mm`` using multiplications for
compute and weight-plus-intermediate elements for memory.

Every count here has an executable twin: ``run_*`` builds the scheme on
random data, performs the contractions, and returns metered counts. The
test suite requires closed form == metered, exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .tensor import TTWeight, TTMTable, ttm_reconstruct
from .tt_linear import TTLinearLayer

__all__ = [
    "LayerConfig",
    "SchemeCost",
    "CostReport",
    "mul_mm", "mem_mm",
    "mul_tt_rtl", "mem_tt_rtl",
    "mul_btt", "mem_btt",
    "mul_ttm", "mem_ttm",
    "tt_weight_elems", "ttm_weight_elems",
    "compare_report", "sweep",
    "run_tt_rtl", "run_btt", "run_ttm",
    "report_csv", "sweep_json", "sweep_csv",
]


@dataclass(frozen=True)
class LayerConfig:
    """Shape of one linear layer: output modes m, input modes n, ranks."""

    out_modes: tuple[int, ...]
    in_modes: tuple[int, ...]
    ranks: tuple[int, ...]              # 2d + 1 entries, boundaries 1
    workload: int                       # K = batch * sequence length
    ttm_ranks: tuple[int, ...] | None = None  # d + 1 entries; default uniform

    def __post_init__(self):
        object.__setattr__(self, "out_modes", tuple(int(x) for x in self.out_modes))
        object.__setattr__(self, "in_modes", tuple(int(x) for x in self.in_modes))
        object.__setattr__(self, "ranks", tuple(int(x) for x in self.ranks))
        d = len(self.out_modes)
        if d == 0 or len(self.in_modes) != d:
            raise ValueError("out_modes and in_modes must be nonempty and equally long")
        if len(self.ranks) != 2 * d + 1:
            raise ValueError(f"expected {2 * d + 1} ranks, got {len(self.ranks)}")
        if self.ranks[0] != 1 or self.ranks[-1] != 1:
            raise ValueError("boundary ranks must be 1")
        if self.workload < 1:
            raise ValueError("workload must be >= 1")
        if self.ttm_ranks is None:
            r = max(self.ranks)
            object.__setattr__(self, "ttm_ranks", (1,) + (r,) * (d - 1) + (1,))
        else:
            object.__setattr__(self, "ttm_ranks", tuple(int(x) for x in self.ttm_ranks))
            if len(self.ttm_ranks) != d + 1:
                raise ValueError(f"expected {d + 1} ttm ranks, got {len(self.ttm_ranks)}")
            if self.ttm_ranks[0] != 1 or self.ttm_ranks[-1] != 1:
                raise ValueError("ttm boundary ranks must be 1")

    @property
    def d(self) -> int:
        return len(self.out_modes)

    @property
    def rows(self) -> int:
        return math.prod(self.out_modes)

    @property
    def cols(self) -> int:
        return math.prod(self.in_modes)

    def with_workload(self, k: int) -> "LayerConfig":
        return LayerConfig(self.out_modes, self.in_modes, self.ranks, k, self.ttm_ranks)

    def with_uniform_rank(self, r: int) -> "LayerConfig":
        d = self.d
        return LayerConfig(self.out_modes, self.in_modes,
                           (1,) + (r,) * (2 * d - 1) + (1,),
                           self.workload,
                           (1,) + (r,) * (d - 1) + (1,))


# -- closed forms ----------------------------------------------------------

def mul_mm(cfg: LayerConfig, train_multiplier: int = 1) -> int:
    return train_multiplier * cfg.workload * cfg.rows * cfg.cols


def mem_mm(cfg: LayerConfig) -> int:
    return 0  # a single matrix product leaves no intra-layer intermediate


def mul_tt_rtl(cfg: LayerConfig, train_multiplier: int = 1) -> int:
    d, m, n, r, k = cfg.d, cfg.out_modes, cfg.in_modes, cfg.ranks, cfg.workload
    total = 0
    for s in range(d):
        total += r[2 * d - s - 1] * r[2 * d - s] * math.prod(n[: d - s])
        total += r[d - s - 1] * r[d - s] * math.prod(m[d - s - 1:])
    return train_multiplier * k * total


def mem_tt_rtl(cfg: LayerConfig) -> int:
    d, m, n, r, k = cfg.d, cfg.out_modes, cfg.in_modes, cfg.ranks, cfg.workload
    total = r[d]
    for s in range(d - 1):
        total += r[2 * d - s - 1] * math.prod(n[: d - s - 1])
        total += r[d - s - 1] * math.prod(m[d - s - 1:])
    return k * total


def mul_btt(cfg: LayerConfig, train_multiplier: int = 1) -> int:
    d, m, n, r, k = cfg.d, cfg.out_modes, cfg.in_modes, cfg.ranks, cfg.workload
    total = k * r[d] * (cfg.rows + cfg.cols)
    for s in range(d - 1):
        total += r[2 * d - s - 1] * r[2 * d - s - 2] * math.prod(n[d - s - 2:])
        total += r[s + 1] * r[s + 2] * math.prod(m[: s + 2])
    return train_multiplier * total


def mem_btt(cfg: LayerConfig) -> int:
    # Each chain stage's product stays live; the output-side product ending
    # at rank r[s+2] holds r[s+2] * prod(m[:s+2]) elements, mirroring the
    # input side. Plus the K-wide boundary tensor.
    d, m, n, r, k = cfg.d, cfg.out_modes, cfg.in_modes, cfg.ranks, cfg.workload
    total = k * r[d]
    for s in range(d - 1):
        total += r[2 * d - s - 2] * math.prod(n[d - s - 2:])
        total += r[s + 2] * math.prod(m[: s + 2])
    return total


def mul_ttm(cfg: LayerConfig, train_multiplier: int = 1) -> int:
    d, m, n, k = cfg.d, cfg.out_modes, cfg.in_modes, cfg.workload
    r = cfg.ttm_ranks
    total = 0
    for s in range(d):
        total += (r[d - s - 1] * r[d - s]
                  * math.prod(n[: d - s]) * math.prod(m[d - s - 1:]))
    return train_multiplier * k * total


def mem_ttm(cfg: LayerConfig) -> int:
    d, m, n, k = cfg.d, cfg.out_modes, cfg.in_modes, cfg.workload
    r = cfg.ttm_ranks
    total = 0
    for s in range(d - 1):
        total += r[d - s - 1] * math.prod(n[: d - s - 1]) * math.prod(m[d - s - 1:])
    return k * total


def tt_weight_elems(cfg: LayerConfig) -> int:
    modes = cfg.out_modes + cfg.in_modes
    return sum(cfg.ranks[i] * modes[i] * cfg.ranks[i + 1] for i in range(2 * cfg.d))


def ttm_weight_elems(cfg: LayerConfig) -> int:
    r = cfg.ttm_ranks
    return sum(r[i] * cfg.out_modes[i] * cfg.in_modes[i] * r[i + 1] for i in range(cfg.d))


# -- reports ---------------------------------------------------------------

@dataclass
class SchemeCost:
    scheme: str
    muls: int
    weight_mem: int
    act_mem: int

    @property
    def total_mem(self) -> int:
        return self.weight_mem + self.act_mem


@dataclass
class CostReport:
    cfg: LayerConfig
    schemes: dict[str, SchemeCost]

    def ratio_compute(self, scheme: str) -> float:
        return self.schemes["mm"].muls / self.schemes[scheme].muls

    def ratio_memory(self, scheme: str) -> float:
        return self.schemes["mm"].total_mem / self.schemes[scheme].total_mem


def compare_report(cfg: LayerConfig, train_multiplier: int = 1) -> CostReport:
    schemes = {
        "mm": SchemeCost("mm", mul_mm(cfg, train_multiplier), cfg.rows * cfg.cols, mem_mm(cfg)),
        "ttm": SchemeCost("ttm", mul_ttm(cfg, train_multiplier), ttm_weight_elems(cfg),
                          mem_ttm(cfg)),
        "tt_rtl": SchemeCost("tt_rtl", mul_tt_rtl(cfg, train_multiplier), tt_weight_elems(cfg),
                             mem_tt_rtl(cfg)),
        "btt": SchemeCost("btt", mul_btt(cfg, train_multiplier), tt_weight_elems(cfg),
                          mem_btt(cfg)),
    }
    return CostReport(cfg, schemes)


def sweep(cfg: LayerConfig, axis: str, values, train_multiplier: int = 1):
    """Reports along a workload or rank sweep: list of (value, CostReport)."""
    out = []
    for v in values:
        if axis == "K":
            c = cfg.with_workload(int(v))
        elif axis == "rank":
            c = cfg.with_uniform_rank(int(v))
        else:
            raise ValueError(f"unknown sweep axis {axis!r}")
        out.append((int(v), compare_report(c, train_multiplier)))
    return out


def report_csv(report: CostReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["scheme", "muls", "weight_mem", "act_mem", "ratio_compute", "ratio_memory"])
    for name in ("mm", "ttm", "tt_rtl", "btt"):
        sc = report.schemes[name]
        w.writerow([name, sc.muls, sc.weight_mem, sc.act_mem,
                    f"{report.ratio_compute(name):.6g}", f"{report.ratio_memory(name):.6g}"])
    return buf.getvalue()


def sweep_json(axis: str, points) -> str:
    doc = {"axis": axis, "points": []}
    for value, rep in points:
        entry = {"value": value, "schemes": {}}
        for name, sc in rep.schemes.items():
            entry["schemes"][name] = {
                "muls": sc.muls,
                "weight_mem": sc.weight_mem,
                "act_mem": sc.act_mem,
                "ratio_compute": rep.ratio_compute(name),
                "ratio_memory": rep.ratio_memory(name),
            }
        doc["points"].append(entry)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def sweep_csv(axis: str, points) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow([axis, "scheme", "muls", "weight_mem", "act_mem",
                "ratio_compute", "ratio_memory"])
    for value, rep in points:
        for name in ("mm", "ttm", "tt_rtl", "btt"):
            sc = rep.schemes[name]
            w.writerow([value, name, sc.muls, sc.weight_mem, sc.act_mem,
                        f"{rep.ratio_compute(name):.6g}", f"{rep.ratio_memory(name):.6g}"])
    return buf.getvalue()


# -- instrumented executors -------------------------------------------------

def _layer_for(cfg: LayerConfig, rng: np.random.Generator, dtype=np.float64) -> TTLinearLayer:
    w = TTWeight.random(cfg.out_modes, cfg.in_modes, cfg.ranks, rng, dtype=dtype)
    return TTLinearLayer(w, bias=None, name="probe")


def run_tt_rtl(cfg: LayerConfig, rng: np.random.Generator):
    """Execute the right-to-left contraction; return (muls, live intermediates)."""
    layer = _layer_for(cfg, rng)
    x = rng.standard_normal((cfg.cols, cfg.workload))
    layer.forward_rtl(x)
    return layer.meter.muls, layer.meter.live_elems


def run_btt(cfg: LayerConfig, rng: np.random.Generator):
    layer = _layer_for(cfg, rng)
    x = rng.standard_normal((cfg.cols, cfg.workload))
    layer.forward_btt(x, training=True)
    return layer.meter.muls, layer.meter.live_elems


def run_ttm(cfg: LayerConfig, rng: np.random.Generator):
    """Execute the order-4 chain right-to-left on a dense input.

    Returns (muls, live intermediates, output, dense-oracle output).
    """
    d, m, n = cfg.d, cfg.out_modes, cfg.in_modes
    ranks = cfg.ttm_ranks
    k = cfg.workload
    table = TTMTable.random(m, n, ranks, rng, dtype=np.float64)
    x = rng.standard_normal((cfg.cols, k))

    muls = 0
    live = 0
    r = x.reshape(-1, 1, 1, k)  # (remaining n, rank, accumulated m, K)
    for k0 in range(d - 1, -1, -1):
        core = table.cores[k0]
        rout, mk, nc, rin = core.shape
        p = math.prod(n[:k0])
        qm = r.shape[2]
        lhs = (r.reshape(p, nc, rin, qm, k)
               .transpose(0, 3, 4, 1, 2)
               .reshape(p * qm * k, nc * rin))
        rhs = core.transpose(2, 3, 0, 1).reshape(nc * rin, rout * mk)
        out = (lhs @ rhs).reshape(p, qm, k, rout, mk)
        r = out.transpose(0, 3, 4, 1, 2).reshape(p, rout, mk * qm, k)
        muls += p * qm * k * nc * rin * rout * mk
        if k0 > 0:
            live += r.size
    y = r.reshape(cfg.rows, k)
    oracle = ttm_reconstruct(table) @ x
    return muls, live, y, oracle
