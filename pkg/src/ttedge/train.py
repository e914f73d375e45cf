"""Per-example SGD training loop with per-epoch metrics."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .model import TensorTransformer

__all__ = ["EpochMetrics", "train_epoch", "train_model", "metrics_csv"]


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    intent_acc: float
    slot_acc: float | None
    wall_time: float


def train_epoch(model: TensorTransformer, dataset: list[dict], lr: float,
                shuffle_rng: np.random.Generator | None, epoch: int,
                timing: bool = False) -> EpochMetrics:
    if not dataset:
        raise ValueError("dataset is empty")
    order = np.arange(len(dataset))
    if shuffle_rng is not None:
        shuffle_rng.shuffle(order)
    t0 = time.perf_counter()
    losses = []
    intent_hits = []
    slot_accs = []
    for idx in order:
        loss, acc_i, acc_s = model.train_step(dataset[int(idx)], lr)
        losses.append(loss)
        intent_hits.append(acc_i)
        if acc_s is not None:
            slot_accs.append(acc_s)
    wall = time.perf_counter() - t0 if timing else 0.0
    return EpochMetrics(
        epoch=epoch,
        loss=float(np.mean(losses)),
        intent_acc=float(np.mean(intent_hits)),
        slot_acc=float(np.mean(slot_accs)) if slot_accs else None,
        wall_time=wall,
    )


def train_model(model: TensorTransformer, dataset: list[dict], cfg: TrainConfig,
                shuffle_rng: np.random.Generator | None = None,
                timing: bool = False, log=None) -> list[EpochMetrics]:
    history = []
    for epoch in range(cfg.epochs):
        m = train_epoch(model, dataset, cfg.lr, shuffle_rng, epoch, timing=timing)
        history.append(m)
        if log is not None:
            slot = f" slot_acc={m.slot_acc:.4f}" if m.slot_acc is not None else ""
            log(f"epoch {m.epoch}: loss={m.loss:.6f} intent_acc={m.intent_acc:.4f}{slot}")
    return history


def metrics_csv(history: list[EpochMetrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["epoch", "loss", "intent_acc", "slot_acc", "wall_time"])
    for m in history:
        slot = "" if m.slot_acc is None else f"{m.slot_acc:.8f}"
        w.writerow([m.epoch, f"{m.loss:.8f}", f"{m.intent_acc:.8f}", slot,
                    f"{m.wall_time:.6f}"])
    return buf.getvalue()
