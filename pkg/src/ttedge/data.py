"""Dataset ingestion (JSON lines) and the seeded synthetic generator.

Records are ``{"token_ids": [int], "intent_label": int}`` with optional
``"slot_labels": [int]``. The synthetic task is separable by construction:
class c draws its tokens from the c-th slice of the vocabulary, and slot
labels (when requested) are a fixed function of the token id.
"""

from __future__ import annotations

import json

import numpy as np

__all__ = ["generate_synthetic", "write_jsonl", "read_jsonl"]


def generate_synthetic(count: int, seq_len: int, num_classes: int, vocab_size: int,
                       seed: int, num_slots: int = 0) -> list[dict]:
    if num_classes < 2 or vocab_size < num_classes:
        raise ValueError("need at least 2 classes and vocab_size >= num_classes")
    rng = np.random.Generator(np.random.PCG64(seed))
    slice_size = vocab_size // num_classes
    examples = []
    for i in range(count):
        label = i % num_classes
        lo = label * slice_size
        hi = vocab_size if label == num_classes - 1 else lo + slice_size
        ids = rng.integers(lo, hi, size=seq_len)
        ex = {"token_ids": [int(t) for t in ids], "intent_label": int(label)}
        if num_slots > 0:
            ex["slot_labels"] = [int(t % num_slots) for t in ids]
        examples.append(ex)
    return examples


def write_jsonl(path, examples) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex, sort_keys=True, separators=(",", ":")))
            fh.write("\n")


def read_jsonl(path) -> list[dict]:
    examples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                ex = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON record: {exc}") from exc
            if "token_ids" not in ex or "intent_label" not in ex:
                raise ValueError(f"{path}:{lineno}: record needs token_ids and intent_label")
            examples.append(ex)
    return examples
