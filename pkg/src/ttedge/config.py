"""Run configuration: one flat JSON file, unknown keys rejected."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields

import numpy as np

__all__ = ["TrainConfig", "SyntheticSpec", "ConfigError", "load_config", "seed_streams"]


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass
class SyntheticSpec:
    count: int = 500
    classes: int = 2
    vocab_slice: bool = True  # class c draws tokens from the c-th vocab slice

    @classmethod
    def from_dict(cls, doc: dict) -> "SyntheticSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown synthetic keys: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class TrainConfig:
    # model shape
    num_encoders: int = 2
    hidden: int = 768
    hidden_out_modes: tuple[int, ...] = (12, 8, 8)
    hidden_in_modes: tuple[int, ...] = (8, 8, 12)
    tt_rank: int = 12
    heads: int = 1
    vocab_size: int = 1000
    vocab_modes: tuple[int, ...] = (10, 10, 10)
    embed_modes: tuple[int, ...] = (12, 8, 8)
    embed_rank: int = 30
    seq_len: int = 32
    n_segments: int = 2
    num_classes: int = 2
    num_slots: int = 0
    # optimization
    lr: float = 4e-3
    batch_size: int = 1
    epochs: int = 2
    seed: int = 0
    # execution
    parallel_btt: bool = False
    spill_activations: bool = False
    # data
    dataset: str | None = None
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)

    def __post_init__(self):
        self.hidden_out_modes = tuple(int(x) for x in self.hidden_out_modes)
        self.hidden_in_modes = tuple(int(x) for x in self.hidden_in_modes)
        self.vocab_modes = tuple(int(x) for x in self.vocab_modes)
        self.embed_modes = tuple(int(x) for x in self.embed_modes)
        for name in ("num_encoders", "hidden", "tt_rank", "heads", "vocab_size",
                     "embed_rank", "seq_len", "n_segments", "num_classes",
                     "batch_size", "seed"):
            if int(getattr(self, name)) < (0 if name == "seed" else 1):
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.epochs < 0 or self.num_slots < 0:
            raise ConfigError("epochs and num_slots must be >= 0")
        if math.prod(self.hidden_out_modes) != self.hidden:
            raise ConfigError(f"hidden_out_modes {self.hidden_out_modes} do not "
                              f"multiply to hidden {self.hidden}")
        if math.prod(self.hidden_in_modes) != self.hidden:
            raise ConfigError(f"hidden_in_modes {self.hidden_in_modes} do not "
                              f"multiply to hidden {self.hidden}")
        if math.prod(self.vocab_modes) != self.vocab_size:
            raise ConfigError(f"vocab_modes {self.vocab_modes} do not multiply to "
                              f"vocab_size {self.vocab_size}")
        if math.prod(self.embed_modes) != self.hidden:
            raise ConfigError(f"embed_modes {self.embed_modes} do not multiply to "
                              f"hidden {self.hidden}")
        if len(self.embed_modes) != len(self.vocab_modes):
            raise ConfigError("embed_modes and vocab_modes must pair up")
        if self.hidden % self.heads != 0:
            raise ConfigError(f"heads {self.heads} must divide hidden {self.hidden}")
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")

    @property
    def tt_ranks(self) -> tuple[int, ...]:
        d2 = len(self.hidden_out_modes) + len(self.hidden_in_modes)
        return (1,) + (self.tt_rank,) * (d2 - 1) + (1,)

    @property
    def embed_ranks(self) -> tuple[int, ...]:
        d = len(self.embed_modes)
        return (1,) + (self.embed_rank,) * (d - 1) + (1,)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        doc = dict(doc)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "synthetic" in doc:
            if not isinstance(doc["synthetic"], dict):
                raise ConfigError("synthetic must be an object")
            doc["synthetic"] = SyntheticSpec.from_dict(doc["synthetic"])
        return cls(**doc)

    def to_dict(self) -> dict:
        doc = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = list(v)
            elif isinstance(v, SyntheticSpec):
                v = {"count": v.count, "classes": v.classes, "vocab_slice": v.vocab_slice}
            doc[f.name] = v
        return doc


def load_config(path) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return TrainConfig.from_dict(doc)


def seed_streams(seed: int) -> dict[str, np.random.Generator]:
    """Named random streams derived from one seed: init, data, shuffle."""
    children = np.random.SeedSequence(seed).spawn(3)
    names = ("init", "data", "shuffle")
    return {n: np.random.Generator(np.random.PCG64(s)) for n, s in zip(names, children)}
