"""Embedding tables on order-4 factor chains with index-select lookup.

A table holds an (embed_dim x vocab_size) matrix whose row modes factor the
embedding dimension and whose column modes factor the vocabulary. A token id
is decoded into one column digit per core (mixed radix, most significant
digit first), each core is sliced at its digit, and the slices are chained
into the embedding vector. Gradients touch only the slices selected by the
batch; everything else stays exactly zero.
"""

from __future__ import annotations

import math

import numpy as np

from .tensor import ShapeError, TTMTable, ttm_reconstruct

__all__ = ["TTMEmbedding", "embed_sum", "embed_sum_backward"]


class TTMEmbedding:
    def __init__(self, table: TTMTable, name: str = "ttm_embedding"):
        self.table = table
        self.name = name
        self._cache: dict | None = None

    @classmethod
    def random(cls, embed_modes, vocab_modes, ranks, rng: np.random.Generator,
               dtype=np.float32, name: str = "ttm_embedding") -> "TTMEmbedding":
        table = TTMTable.random(embed_modes, vocab_modes, ranks, rng, dtype=dtype)
        return cls(table, name=name)

    @property
    def vocab_size(self) -> int:
        return self.table.cols

    @property
    def embed_dim(self) -> int:
        return self.table.rows

    @property
    def dtype(self):
        return self.table.dtype

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        return [(f"{self.name}.core{k}", c) for k, c in enumerate(self.table.cores)]

    def as_matrix(self) -> np.ndarray:
        """Dense (embed_dim x vocab_size) matrix; oracle use only."""
        return ttm_reconstruct(self.table)

    def decode_id(self, token: int) -> tuple[int, ...]:
        if not 0 <= token < self.vocab_size:
            raise ValueError(f"{self.name}: token id {token} out of range [0, {self.vocab_size})")
        return tuple(int(j) for j in np.unravel_index(token, self.table.col_modes))

    def encode_id(self, digits) -> int:
        return int(np.ravel_multi_index(tuple(digits), self.table.col_modes))

    def _chain(self, digits) -> list[np.ndarray]:
        """Running slice products; the last has shape (embed_dim, 1)."""
        cores = self.table.cores
        w = cores[0][0, :, digits[0], :]  # (e_1, r_1)
        out = [w]
        for k, jk in enumerate(digits[1:], start=1):
            s = cores[k][:, :, jk, :]
            rin, ek, rout = s.shape
            w = (w @ s.reshape(rin, ek * rout)).reshape(-1, rout)
            out.append(w)
        return out

    def lookup(self, token_ids, training: bool = False) -> np.ndarray:
        ids = np.asarray(token_ids, dtype=np.int64)
        if ids.ndim != 1:
            raise ShapeError(f"{self.name}: token ids must be a flat sequence, got {ids.shape}")
        cols = np.empty((self.embed_dim, ids.size), dtype=self.dtype)
        all_digits = []
        all_chains = []
        for t, token in enumerate(ids):
            digits = self.decode_id(int(token))
            chain = self._chain(digits)
            cols[:, t] = chain[-1][:, 0]
            if training:
                all_digits.append(digits)
                all_chains.append(chain)
        self._cache = {"digits": all_digits, "chains": all_chains} if training else None
        return cols

    def backward_table(self, dz: np.ndarray) -> list[np.ndarray]:
        if self._cache is None:
            raise RuntimeError(f"{self.name}: no training-mode lookup cached")
        dz = np.asarray(dz, dtype=self.dtype)
        digits_list = self._cache["digits"]
        chains_list = self._cache["chains"]
        if dz.shape != (self.embed_dim, len(digits_list)):
            raise ShapeError(
                f"{self.name}: gradient must be ({self.embed_dim}, {len(digits_list)}), "
                f"got {dz.shape}"
            )
        e = self.table.row_modes
        ranks = self.table.ranks
        d = self.table.d
        grads = [np.zeros_like(c) for c in self.table.cores]
        for t, (digits, chain) in enumerate(zip(digits_list, chains_list)):
            g = dz[:, t].reshape(-1, 1)  # grad w.r.t. the final chain product
            for k0 in range(d - 1, -1, -1):
                p = math.prod(e[:k0])
                gk = g.reshape(p, e[k0], ranks[k0 + 1])
                jk = digits[k0]
                if k0 > 0:
                    prev = chain[k0 - 1]
                    grads[k0][:, :, jk, :] += np.einsum("pa,pib->aib", prev, gk)
                    s = self.table.cores[k0][:, :, jk, :]
                    g = np.einsum("pib,aib->pa", gk, s)
                else:
                    grads[0][0, :, jk, :] += gk[0]
        return grads

    def apply_sgd(self, grads: list[np.ndarray], lr: float) -> None:
        if len(grads) != len(self.table.cores):
            raise ShapeError(f"{self.name}: expected {len(self.table.cores)} core gradients")
        for core, g in zip(self.table.cores, grads):
            if core.shape != g.shape:
                raise ShapeError(f"{self.name}: gradient shape {g.shape} != core {core.shape}")
            core -= self.dtype.type(lr) * g


def embed_sum(tok: TTMEmbedding, pos: TTMEmbedding, seg: TTMEmbedding,
              ids, positions, segments, training: bool = False) -> np.ndarray:
    """Token + position + segment embeddings, summed columnwise."""
    ids = np.asarray(ids)
    positions = np.asarray(positions)
    segments = np.asarray(segments)
    if not (ids.shape == positions.shape == segments.shape):
        raise ShapeError(
            f"index streams differ in length: {ids.shape}, {positions.shape}, {segments.shape}"
        )
    return (tok.lookup(ids, training=training)
            + pos.lookup(positions, training=training)
            + seg.lookup(segments, training=training))


def embed_sum_backward(tok: TTMEmbedding, pos: TTMEmbedding, seg: TTMEmbedding,
                       dz: np.ndarray):
    """The summed forward passes dz through to each table unchanged."""
    return tok.backward_table(dz), pos.backward_table(dz), seg.backward_table(dz)
