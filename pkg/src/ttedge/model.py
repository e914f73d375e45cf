"""Encoder-only transformer whose weights live on tensor-train factors.

Activations are (hidden x tokens) matrices. Every linear map in the
attention blocks, the feed-forward nets, and the classifier projection is
a ``TTLinearLayer``; the three embedding tables are ``TTMEmbedding``; only
the task heads are plain dense matrices. Backward passes are written by
hand and produce a flat ``{parameter name: gradient}`` dict whose keys
match ``parameters()``.

With ``spill`` enabled, each block's input activation is staged to disk
after the forward pass and reloaded during backward, bit exactly.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .bram import FactorArray
from .config import TrainConfig
from .ops import (gelu, gelu_backward, layernorm, layernorm_backward, softmax,
                  softmax_backward, tanh_backward, cross_entropy)
from .tensor import ShapeError
from .tt_linear import TTLinearLayer
from .ttm_embedding import TTMEmbedding

__all__ = ["ActivationStore", "EncoderBlock", "Classifier", "TensorTransformer",
           "DenseReference", "factor_inventory", "compression_summary"]


class ActivationStore:
    """Holds inter-layer activations, optionally staged through files."""

    def __init__(self, spill_dir: str | None = None):
        self.spill_dir = spill_dir
        self._mem: dict[str, np.ndarray] = {}
        if spill_dir:
            os.makedirs(spill_dir, exist_ok=True)

    def put(self, key: str, arr: np.ndarray) -> None:
        if self.spill_dir:
            np.save(os.path.join(self.spill_dir, f"{key}.npy"), arr)
        else:
            self._mem[key] = arr

    def get(self, key: str) -> np.ndarray:
        if self.spill_dir:
            return np.load(os.path.join(self.spill_dir, f"{key}.npy"))
        return self._mem[key]


class EncoderBlock:
    def __init__(self, cfg: TrainConfig, rng: np.random.Generator, dtype, name: str):
        self.name = name
        self.hidden = cfg.hidden
        self.heads = cfg.heads
        self.scale = 1.0 / math.sqrt(cfg.hidden // cfg.heads)
        mk = dict(dtype=dtype)
        args = (cfg.hidden_out_modes, cfg.hidden_in_modes, cfg.tt_ranks, rng)
        self.q = TTLinearLayer.random(*args, name=f"{name}.q", **mk)
        self.k = TTLinearLayer.random(*args, name=f"{name}.k", **mk)
        self.v = TTLinearLayer.random(*args, name=f"{name}.v", **mk)
        self.o = TTLinearLayer.random(*args, name=f"{name}.o", **mk)
        self.ffn1 = TTLinearLayer.random(*args, name=f"{name}.ffn1", **mk)
        self.ffn2 = TTLinearLayer.random(*args, name=f"{name}.ffn2", **mk)
        self.ln1_gain = np.ones(cfg.hidden, dtype=dtype)
        self.ln1_offset = np.zeros(cfg.hidden, dtype=dtype)
        self.ln2_gain = np.ones(cfg.hidden, dtype=dtype)
        self.ln2_offset = np.zeros(cfg.hidden, dtype=dtype)
        self._cache: dict | None = None

    @property
    def layers(self) -> list[TTLinearLayer]:
        return [self.q, self.k, self.v, self.o, self.ffn1, self.ffn2]

    def set_parallel(self, parallel: bool) -> None:
        for layer in self.layers:
            layer.parallel = parallel

    def parameters(self):
        out = []
        for layer in self.layers:
            out.extend(layer.parameters())
        out.append((f"{self.name}.ln1.gain", self.ln1_gain))
        out.append((f"{self.name}.ln1.offset", self.ln1_offset))
        out.append((f"{self.name}.ln2.gain", self.ln2_gain))
        out.append((f"{self.name}.ln2.offset", self.ln2_offset))
        return out

    def forward(self, x: np.ndarray, training: bool = False,
                store: ActivationStore | None = None) -> np.ndarray:
        q = self.q.forward(x, training=training)
        k = self.k.forward(x, training=training)
        v = self.v.forward(x, training=training)
        dk = self.hidden // self.heads
        probs = []
        attn = np.empty_like(q)
        for h in range(self.heads):
            sl = slice(h * dk, (h + 1) * dk)
            scores = (k[sl].T @ q[sl]) * q.dtype.type(self.scale)
            p = softmax(scores)
            probs.append(p)
            attn[sl] = v[sl] @ p
        a = self.o.forward(attn, training=training)
        r1 = a + x
        h1, c1 = layernorm(r1, self.ln1_gain, self.ln1_offset)
        f1 = self.ffn1.forward(h1, training=training)
        g = gelu(f1)
        f2 = self.ffn2.forward(g, training=training)
        r2 = f2 + h1
        h2, c2 = layernorm(r2, self.ln2_gain, self.ln2_offset)
        if training:
            self._cache = {"q": q, "k": k, "v": v, "probs": probs, "f1": f1,
                           "c1": c1, "c2": c2}
            if store is not None:
                store.put(f"{self.name}.x", x)
                for layer in (self.q, self.k, self.v):
                    layer.detach_input()
        else:
            self._cache = None
        return h2

    def backward(self, dh2: np.ndarray, store: ActivationStore | None = None):
        if self._cache is None:
            raise RuntimeError(f"{self.name}: no training-mode forward cached")
        c = self._cache
        if store is not None:
            x = store.get(f"{self.name}.x")
            for layer in (self.q, self.k, self.v):
                layer.rebind_input(x)
        grads: dict[str, np.ndarray] = {}

        dr2, dg2, do2 = layernorm_backward(dh2, self.ln2_gain, c["c2"])
        grads[f"{self.name}.ln2.gain"] = dg2
        grads[f"{self.name}.ln2.offset"] = do2
        dg_act, g_ffn2 = self.ffn2.backward(dr2)
        self._collect(grads, self.ffn2, g_ffn2)
        df1 = gelu_backward(c["f1"], dg_act)
        dh1_ffn, g_ffn1 = self.ffn1.backward(df1)
        self._collect(grads, self.ffn1, g_ffn1)
        dh1 = dr2 + dh1_ffn

        dr1, dg1, do1 = layernorm_backward(dh1, self.ln1_gain, c["c1"])
        grads[f"{self.name}.ln1.gain"] = dg1
        grads[f"{self.name}.ln1.offset"] = do1
        dattn, g_o = self.o.backward(dr1)
        self._collect(grads, self.o, g_o)

        q, k, v = c["q"], c["k"], c["v"]
        dk_ = self.hidden // self.heads
        dq = np.empty_like(q)
        dkk = np.empty_like(k)
        dv = np.empty_like(v)
        for h, p in enumerate(c["probs"]):
            sl = slice(h * dk_, (h + 1) * dk_)
            do_h = dattn[sl]
            dv[sl] = do_h @ p.T
            dp = v[sl].T @ do_h
            ds = softmax_backward(p, dp) * q.dtype.type(self.scale)
            dq[sl] = k[sl] @ ds
            dkk[sl] = q[sl] @ ds.T
        dx_q, g_q = self.q.backward(dq)
        self._collect(grads, self.q, g_q)
        dx_k, g_k = self.k.backward(dkk)
        self._collect(grads, self.k, g_k)
        dx_v, g_v = self.v.backward(dv)
        self._collect(grads, self.v, g_v)

        dx = dr1 + dx_q + dx_k + dx_v
        return dx, grads

    @staticmethod
    def _collect(grads: dict, layer: TTLinearLayer, g) -> None:
        for i, gc in enumerate(g.cores):
            grads[f"{layer.name}.core{i}"] = gc
        if g.bias is not None:
            grads[f"{layer.name}.bias"] = g.bias


class Classifier:
    """TT projection + tanh + dense intent head; optional dense slot head.

    The intent head reads the first token's hidden state; the slot head
    classifies every token directly.
    """

    def __init__(self, cfg: TrainConfig, rng: np.random.Generator, dtype, name: str = "cls"):
        self.name = name
        self.proj = TTLinearLayer.random(cfg.hidden_out_modes, cfg.hidden_in_modes,
                                         cfg.tt_ranks, rng, dtype=dtype, name=f"{name}.proj")
        bound = 1.0 / math.sqrt(cfg.hidden)
        self.w_intent = rng.uniform(-bound, bound, (cfg.num_classes, cfg.hidden)).astype(dtype)
        self.b_intent = np.zeros(cfg.num_classes, dtype=dtype)
        if cfg.num_slots > 0:
            self.w_slot = rng.uniform(-bound, bound, (cfg.num_slots, cfg.hidden)).astype(dtype)
            self.b_slot = np.zeros(cfg.num_slots, dtype=dtype)
        else:
            self.w_slot = None
            self.b_slot = None
        self._cache: dict | None = None

    def set_parallel(self, parallel: bool) -> None:
        self.proj.parallel = parallel

    def parameters(self):
        out = list(self.proj.parameters())
        out.append((f"{self.name}.intent.w", self.w_intent))
        out.append((f"{self.name}.intent.b", self.b_intent))
        if self.w_slot is not None:
            out.append((f"{self.name}.slot.w", self.w_slot))
            out.append((f"{self.name}.slot.b", self.b_slot))
        return out

    def forward(self, h: np.ndarray, training: bool = False):
        p = self.proj.forward(h[:, :1], training=training)
        t = np.tanh(p)
        intent = self.w_intent @ t + self.b_intent[:, None]
        slots = self.w_slot @ h + self.b_slot[:, None] if self.w_slot is not None else None
        if training:
            self._cache = {"t": t, "h": h}
        else:
            self._cache = None
        return intent, slots

    def backward(self, d_intent: np.ndarray, d_slots: np.ndarray | None = None):
        if self._cache is None:
            raise RuntimeError(f"{self.name}: no training-mode forward cached")
        t, h = self._cache["t"], self._cache["h"]
        grads: dict[str, np.ndarray] = {
            f"{self.name}.intent.w": d_intent @ t.T,
            f"{self.name}.intent.b": d_intent.sum(axis=1),
        }
        dt = self.w_intent.T @ d_intent
        dp = tanh_backward(t, dt)
        dcls, g_proj = self.proj.backward(dp)
        EncoderBlock._collect(grads, self.proj, g_proj)
        dh = np.zeros_like(h)
        dh[:, :1] = dcls
        if self.w_slot is not None:
            if d_slots is not None:
                grads[f"{self.name}.slot.w"] = d_slots @ h.T
                grads[f"{self.name}.slot.b"] = d_slots.sum(axis=1)
                dh += self.w_slot.T @ d_slots
            else:  # slot head untouched by this example's loss
                grads[f"{self.name}.slot.w"] = np.zeros_like(self.w_slot)
                grads[f"{self.name}.slot.b"] = np.zeros_like(self.b_slot)
        return dh, grads


class TensorTransformer:
    def __init__(self, cfg: TrainConfig, rng: np.random.Generator, dtype=np.float32,
                 store: ActivationStore | None = None):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.store = store
        self.tok = TTMEmbedding.random(cfg.embed_modes, cfg.vocab_modes, cfg.embed_ranks,
                                       rng, dtype=dtype, name="tok")
        # position and segment vocabularies are too small to factor usefully
        self.pos = TTMEmbedding.random((cfg.hidden,), (cfg.seq_len,), (1, 1),
                                       rng, dtype=dtype, name="pos")
        self.seg = TTMEmbedding.random((cfg.hidden,), (cfg.n_segments,), (1, 1),
                                       rng, dtype=dtype, name="seg")
        self.blocks = [EncoderBlock(cfg, rng, dtype, name=f"enc{i}")
                       for i in range(cfg.num_encoders)]
        self.classifier = Classifier(cfg, rng, dtype)
        self.set_parallel(cfg.parallel_btt)

    def set_parallel(self, parallel: bool) -> None:
        for blk in self.blocks:
            blk.set_parallel(parallel)
        self.classifier.set_parallel(parallel)

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        out = []
        out.extend(self.tok.parameters())
        out.extend(self.pos.parameters())
        out.extend(self.seg.parameters())
        for blk in self.blocks:
            out.extend(blk.parameters())
        out.extend(self.classifier.parameters())
        return out

    def forward(self, token_ids, segment_ids=None, training: bool = False):
        ids = np.asarray(token_ids, dtype=np.int64)
        n = ids.size
        if n < 1 or n > self.cfg.seq_len:
            raise ShapeError(f"sequence length {n} outside [1, {self.cfg.seq_len}]")
        positions = np.arange(n)
        segments = (np.zeros(n, dtype=np.int64) if segment_ids is None
                    else np.asarray(segment_ids, dtype=np.int64))
        if segments.shape != ids.shape:
            raise ShapeError("segment ids must align with token ids")
        h = (self.tok.lookup(ids, training=training)
             + self.pos.lookup(positions, training=training)
             + self.seg.lookup(segments, training=training))
        for blk in self.blocks:
            h = blk.forward(h, training=training, store=self.store)
        return self.classifier.forward(h, training=training)

    def backward(self, d_intent: np.ndarray, d_slots: np.ndarray | None = None):
        dh, grads = self.classifier.backward(d_intent, d_slots)
        for blk in reversed(self.blocks):
            dh, g = blk.backward(dh, store=self.store)
            grads.update(g)
        for emb in (self.tok, self.pos, self.seg):
            for i, gc in enumerate(emb.backward_table(dh)):
                grads[f"{emb.name}.core{i}"] = gc
        return grads

    def loss_and_grads(self, example: dict):
        """Forward, loss, backward for one example. Returns metrics + grads."""
        intent, slots = self.forward(example["token_ids"],
                                     example.get("segment_ids"), training=True)
        loss_i, acc_i, d_intent = cross_entropy(intent, [example["intent_label"]])
        loss = loss_i
        acc_s = None
        d_slots = None
        if slots is not None and example.get("slot_labels") is not None:
            loss_s, acc_s, d_slots = cross_entropy(slots, example["slot_labels"])
            loss += loss_s
        grads = self.backward(d_intent, d_slots)
        return loss, acc_i, acc_s, grads

    def apply_sgd(self, grads: dict[str, np.ndarray], lr: float) -> None:
        params = dict(self.parameters())
        step = self.dtype.type(lr)
        for name, g in grads.items():
            params[name] -= step * g

    def train_step(self, example: dict, lr: float):
        loss, acc_i, acc_s, grads = self.loss_and_grads(example)
        self.apply_sgd(grads, lr)
        return loss, acc_i, acc_s


def _tt_layers(model: TensorTransformer) -> list[TTLinearLayer]:
    layers = [layer for blk in model.blocks for layer in blk.layers]
    layers.append(model.classifier.proj)
    return layers


def factor_inventory(model: TensorTransformer) -> list[FactorArray]:
    """Every factor array of the model, sized for the memory planner.

    Each array is read with rank-index parallelism, so its parallel-read
    factor is the larger of the two chain ranks. Cores of one layer that
    are consumed in the same bidirectional stage share a conflict tag and
    may not be grouped into one block.
    """
    bw = 8 * model.dtype.itemsize
    arrays: list[FactorArray] = []
    for emb in (model.tok, model.pos, model.seg):
        for i, core in enumerate(emb.table.cores):
            par = max(core.shape[0], core.shape[-1])
            arrays.append(FactorArray(f"{emb.name}.core{i}", bw, par, core.size // par))
    for layer in _tt_layers(model):
        n_cores = len(layer.weight.cores)
        d = n_cores // 2
        for k0, core in enumerate(layer.weight.cores):
            par = max(core.shape[0], core.shape[-1])
            chain_pos = k0 if k0 < d else n_cores - 1 - k0
            stage = max(1, chain_pos)
            arrays.append(FactorArray(f"{layer.name}.core{k0}", bw, par, core.size // par,
                                      conflict=f"{layer.name}/s{stage}"))
    return arrays


def compression_summary(model: TensorTransformer) -> dict:
    """Trained parameter footprint vs the dense-equivalent model."""
    compressed = sum(arr.size for _, arr in model.parameters())
    dense = compressed
    for emb in (model.tok, model.pos, model.seg):
        dense += emb.embed_dim * emb.vocab_size - sum(c.size for c in emb.table.cores)
    for layer in _tt_layers(model):
        dense += layer.out_features * layer.in_features
        dense -= sum(c.size for c in layer.weight.cores)
    itemsize = model.dtype.itemsize
    return {
        "compressed_params": int(compressed),
        "dense_params": int(dense),
        "compressed_bytes": int(compressed) * itemsize,
        "dense_bytes": int(dense) * itemsize,
        "ratio": dense / compressed,
    }


class DenseReference:
    """Uncompressed twin of a TensorTransformer, for equivalence checks.

    Materializes every factorized weight and replays the same computation
    with plain matrices.
    """

    def __init__(self, model: TensorTransformer):
        self.cfg = model.cfg
        self.e_tok = model.tok.as_matrix()
        self.e_pos = model.pos.as_matrix()
        self.e_seg = model.seg.as_matrix()
        self.blocks = []
        for blk in model.blocks:
            self.blocks.append({
                "w": {n: getattr(blk, n).as_matrix() for n in ("q", "k", "v", "o", "ffn1", "ffn2")},
                "b": {n: getattr(blk, n).bias for n in ("q", "k", "v", "o", "ffn1", "ffn2")},
                "ln1": (blk.ln1_gain, blk.ln1_offset),
                "ln2": (blk.ln2_gain, blk.ln2_offset),
                "heads": blk.heads,
                "scale": blk.scale,
            })
        self.proj = model.classifier.proj.as_matrix()
        self.proj_b = model.classifier.proj.bias
        self.w_intent = model.classifier.w_intent
        self.b_intent = model.classifier.b_intent
        self.w_slot = model.classifier.w_slot
        self.b_slot = model.classifier.b_slot

    def forward(self, token_ids, segment_ids=None):
        ids = np.asarray(token_ids, dtype=np.int64)
        n = ids.size
        segments = (np.zeros(n, dtype=np.int64) if segment_ids is None
                    else np.asarray(segment_ids, dtype=np.int64))
        h = self.e_tok[:, ids] + self.e_pos[:, np.arange(n)] + self.e_seg[:, segments]
        hidden = h.shape[0]
        for blk in self.blocks:
            w, b = blk["w"], blk["b"]
            q = w["q"] @ h + b["q"][:, None]
            k = w["k"] @ h + b["k"][:, None]
            v = w["v"] @ h + b["v"][:, None]
            dk = hidden // blk["heads"]
            attn = np.empty_like(q)
            for i in range(blk["heads"]):
                sl = slice(i * dk, (i + 1) * dk)
                p = softmax((k[sl].T @ q[sl]) * q.dtype.type(blk["scale"]))
                attn[sl] = v[sl] @ p
            a = w["o"] @ attn + b["o"][:, None]
            h1, _ = layernorm(a + h, *blk["ln1"])
            f = w["ffn2"] @ gelu(w["ffn1"] @ h1 + b["ffn1"][:, None]) + b["ffn2"][:, None]
            h, _ = layernorm(f + h1, *blk["ln2"])
        t = np.tanh(self.proj @ h[:, :1] + self.proj_b[:, None])
        intent = self.w_intent @ t + self.b_intent[:, None]
        slots = self.w_slot @ h + self.b_slot[:, None] if self.w_slot is not None else None
        return intent, slots
