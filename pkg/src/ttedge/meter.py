"""Counters for multiplications and live intermediate storage.

A ``BufferMeter`` is attached to a layer and updated analytically by the
contraction code: each contraction adds ``output_elements * summed_extent``
multiplications, and each intermediate it produces is registered as live.

Two pools are tracked separately:

* intermediates: tensors produced between contraction stages. In training
  mode they stay live until the meter is reset, since the backward pass
  reuses them.
* scratch: short-lived per-slice temporaries of the fused gradient loops
  (boundary-rank vectors). Output accumulators and views into weights or
  cached tensors are not scratch.

``stages`` keeps one ``StageRecord`` per contraction stage for CSV export.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field


@dataclass
class StageRecord:
    layer: str
    scheme: str
    stage: str
    muls: int
    peak_elems: int


@dataclass
class BufferMeter:
    muls: int = 0
    live_elems: int = 0
    peak_live_elems: int = 0
    scratch_elems: int = 0
    peak_scratch_elems: int = 0
    stages: list[StageRecord] = field(default_factory=list)

    def reset(self) -> None:
        self.muls = 0
        self.live_elems = 0
        self.peak_live_elems = 0
        self.scratch_elems = 0
        self.peak_scratch_elems = 0
        self.stages.clear()

    def add_muls(self, n: int) -> None:
        self.muls += int(n)

    def hold(self, n: int) -> None:
        """Register ``n`` elements of a persistent intermediate."""
        self.live_elems += int(n)
        self.peak_live_elems = max(self.peak_live_elems, self.live_elems)

    def scratch_alloc(self, n: int) -> None:
        self.scratch_elems += int(n)
        self.peak_scratch_elems = max(self.peak_scratch_elems, self.scratch_elems)

    def scratch_free(self, n: int) -> None:
        self.scratch_elems -= int(n)

    def record_stage(self, layer: str, scheme: str, stage: str, muls: int, peak: int) -> None:
        self.stages.append(StageRecord(layer, scheme, stage, int(muls), int(peak)))

    def stages_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["layer", "scheme", "stage", "muls", "peak_elems"])
        for rec in self.stages:
            writer.writerow([rec.layer, rec.scheme, rec.stage, rec.muls, rec.peak_elems])
        return buf.getvalue()
