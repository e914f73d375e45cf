"""Abstract kernel schedules for the contraction dataflow.

Time is counted in whole kernel invocations: every task occupies one step
on one kernel instance. A schedule is produced by greedy list scheduling
under per-kernel instance caps; ``kernel_instances`` reports the peak
number of concurrent invocations actually used per kernel id.

Kernels, for one bi-directional layer with d = 2:

* MUL0: pairs adjacent weight cores (both chain ends).
* MUL1: applies the input-side chain product to the input.
* MUL2: forward: combines the two boundary products into the output;
  backward: combines the output gradient with the cached boundary tensor.
* MUL3: backward only: turns the MUL2 result into a core gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["Task", "ScheduleTrace", "list_schedule", "schedule_qkv", "schedule_fused_bp"]


@dataclass(frozen=True)
class Task:
    name: str
    kernel: str
    deps: tuple[str, ...] = ()


@dataclass
class ScheduleTrace:
    entries: list[tuple[int, str, str]]      # (time step, kernel id, task name)
    kernel_instances: dict[str, int]
    makespan: int
    peak_buffer: int = 0

    def start_times(self) -> dict[str, int]:
        return {name: t for t, _, name in self.entries}

    def validate_dependencies(self, tasks: list[Task]) -> bool:
        starts = self.start_times()
        by_name = {t.name: t for t in tasks}
        if set(starts) != set(by_name):
            return False
        return all(starts[d] < starts[t.name] for t in tasks for d in t.deps)


def list_schedule(tasks: list[Task], caps: dict[str, int | None]) -> ScheduleTrace:
    """Greedy earliest-start schedule, FIFO within a step, honoring caps."""
    pending = list(tasks)
    done: set[str] = set()
    entries: list[tuple[int, str, str]] = []
    usage: dict[str, int] = {}
    t = 0
    while pending:
        step_used: dict[str, int] = {}
        scheduled: list[Task] = []
        for task in pending:
            if any(d not in done for d in task.deps):
                continue
            cap = caps.get(task.kernel)
            if cap is not None and step_used.get(task.kernel, 0) >= cap:
                continue
            step_used[task.kernel] = step_used.get(task.kernel, 0) + 1
            scheduled.append(task)
            entries.append((t, task.kernel, task.name))
        if not scheduled:
            raise ValueError("schedule deadlock: circular dependency or zero cap")
        for task in scheduled:
            pending.remove(task)
            done.add(task.name)
        for kernel, n in step_used.items():
            usage[kernel] = max(usage.get(kernel, 0), n)
        t += 1
    return ScheduleTrace(entries, usage, makespan=t)


def qkv_tasks(layers=("q", "k", "v")) -> list[Task]:
    tasks = []
    for name in layers:
        tasks.append(Task(f"{name}.mul0a", "MUL0"))
        tasks.append(Task(f"{name}.mul0b", "MUL0"))
        tasks.append(Task(f"{name}.mul1", "MUL1", (f"{name}.mul0a",)))
        tasks.append(Task(f"{name}.mul2", "MUL2", (f"{name}.mul1", f"{name}.mul0b")))
    return tasks


def schedule_qkv(naive: bool, layers=("q", "k", "v")) -> ScheduleTrace:
    """Forward schedule for the query/key/value layers of one block.

    The naive variant launches every chain-pairing task at step 0 and so
    needs one MUL0 instance per task; the rescheduled variant defers the
    non-urgent pairings, reusing two MUL0 instances at the same makespan.
    """
    tasks = qkv_tasks(layers)
    caps = {"MUL0": None if naive else 2, "MUL1": 1, "MUL2": 1}
    return list_schedule(tasks, caps)


def schedule_fused_bp(out_modes, rank: int, fused: bool) -> ScheduleTrace:
    """Core-gradient schedule for the output-side cores of one layer.

    Unfused, the gradient contraction (MUL2) finishes before the core
    updates (MUL3) start, so its whole result -- one rank-wide vector per
    output slice -- must be buffered. Fused, each output slice's MUL2
    result feeds the two MUL3 updates immediately and the buffer holds a
    single rank-wide vector.
    """
    slices = math.prod(tuple(out_modes))
    if fused:
        tasks = []
        prev = None
        for s in range(slices):
            dep = () if prev is None else (prev,)
            tasks.append(Task(f"mul2.s{s}", "MUL2", dep))
            tasks.append(Task(f"mul3a.s{s}", "MUL3", (f"mul2.s{s}",)))
            tasks.append(Task(f"mul3b.s{s}", "MUL3", (f"mul2.s{s}",)))
            prev = f"mul3a.s{s}"  # next slice reuses the buffer after consumption
        trace = list_schedule(tasks, {"MUL2": 1, "MUL3": 2})
        trace.peak_buffer = rank
        return trace
    tasks = [
        Task("mul2", "MUL2"),
        Task("mul3a", "MUL3", ("mul2",)),
        Task("mul3b", "MUL3", ("mul2",)),
    ]
    trace = list_schedule(tasks, {"MUL2": 1, "MUL3": 2})
    trace.peak_buffer = slices * rank
    return trace
