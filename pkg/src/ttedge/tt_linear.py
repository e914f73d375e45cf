"""Linear layer on tensor-train factors, never materializing the matrix.

Forward propagation supports two contraction orders:

* ``rtl``: right-to-left, absorbing the input into the factor chain one
  core at a time. Every stage's cost scales with the workload width K.
* ``btt``: bi-directional, building the output-side and input-side chain
  products toward the middle first (workload-independent), then applying
  the two boundary products to the input. The two chains have no data
  dependency and may run on two threads (``parallel=True``) with bitwise
  identical results.

Backward propagation requires a training-mode ``btt`` forward: it reuses
the cached chain prefixes/suffixes and the rank-wide boundary tensors.
Core gradients are computed with fused per-slice loops whose scratch never
exceeds a couple of boundary-rank vectors, regardless of K or the layer
width; the attached ``BufferMeter`` tracks this.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .meter import BufferMeter
from .tensor import ShapeError, TTWeight, tt_as_matrix

__all__ = ["CacheError", "TTGrads", "TTLinearLayer"]


class CacheError(RuntimeError):
    """Backward called without a preceding training-mode forward."""


_POOL: ThreadPoolExecutor | None = None


def _chain_pool() -> ThreadPoolExecutor:
    global _POOL
    if _POOL is None:
        _POOL = ThreadPoolExecutor(max_workers=2, thread_name_prefix="ttchain")
    return _POOL


@dataclass
class TTGrads:
    cores: list[np.ndarray]
    bias: np.ndarray | None = None


class TTLinearLayer:
    def __init__(self, weight: TTWeight, bias: np.ndarray | None = None,
                 name: str = "tt_linear", parallel: bool = False):
        self.weight = weight
        if bias is not None:
            bias = np.asarray(bias, dtype=weight.dtype)
            if bias.shape != (weight.rows,):
                raise ShapeError(f"bias must have length {weight.rows}, got {bias.shape}")
        self.bias = bias
        self.name = name
        self.parallel = parallel
        self.meter = BufferMeter()
        self._cache: dict | None = None

    @classmethod
    def random(cls, out_modes, in_modes, ranks, rng: np.random.Generator,
               dtype=np.float32, bias: bool = True, name: str = "tt_linear") -> "TTLinearLayer":
        w = TTWeight.random(out_modes, in_modes, ranks, rng, dtype=dtype)
        b = np.zeros(w.rows, dtype=dtype) if bias else None
        return cls(w, b, name=name)

    # -- introspection ----------------------------------------------------

    @property
    def in_features(self) -> int:
        return self.weight.cols

    @property
    def out_features(self) -> int:
        return self.weight.rows

    def as_matrix(self) -> np.ndarray:
        return tt_as_matrix(self.weight)

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        named = [(f"{self.name}.core{k}", c) for k, c in enumerate(self.weight.cores)]
        if self.bias is not None:
            named.append((f"{self.name}.bias", self.bias))
        return named

    # -- forward ----------------------------------------------------------

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.weight.dtype)
        if x.ndim != 2 or x.shape[0] != self.weight.cols:
            raise ShapeError(
                f"{self.name}: input must be ({self.weight.cols}, K), got {x.shape}"
            )
        return x

    def forward(self, x: np.ndarray, scheme: str = "btt", training: bool = False,
                parallel: bool | None = None) -> np.ndarray:
        if scheme == "btt":
            return self.forward_btt(x, training=training, parallel=parallel)
        if scheme == "rtl":
            return self.forward_rtl(x)
        raise ValueError(f"unknown scheme {scheme!r}")

    def forward_rtl(self, x: np.ndarray) -> np.ndarray:
        """Right-to-left contraction. Cost metering only; leaves no cache."""
        x = self._check_input(x)
        w = self.weight
        d, m, n, ranks = w.d, w.out_modes, w.in_modes, w.ranks
        K = x.shape[1]
        meter = self.meter
        meter.reset()
        self._cache = None

        r = x.reshape(-1, K, 1)  # (prod(n), K, r_2d = 1)
        for k0 in range(2 * d - 1, d - 1, -1):
            c = k0 - d
            p = math.prod(n[:c])
            nc, rin, rout = n[c], ranks[k0 + 1], ranks[k0]
            lhs = r.reshape(p, nc, K, rin).transpose(0, 2, 1, 3).reshape(p * K, nc * rin)
            rhs = w.cores[k0].transpose(1, 2, 0).reshape(nc * rin, rout)
            r = (lhs @ rhs).reshape(p, K, rout)
            meter.add_muls(p * K * rout * nc * rin)
            meter.hold(r.size)
            meter.record_stage(self.name, "rtl", f"in{c}", p * K * rout * nc * rin, r.size)

        out = r.reshape(K, 1, ranks[d])  # (K, accumulated out modes, rank)
        for k0 in range(d - 1, -1, -1):
            mk, rout, rin = m[k0], ranks[k0], ranks[k0 + 1]
            q = out.shape[1]
            t = out.reshape(K * q, rin) @ w.cores[k0].reshape(rout * mk, rin).T
            out = t.reshape(K, q, rout, mk).transpose(0, 3, 1, 2).reshape(K, mk * q, rout)
            meter.add_muls(K * q * rout * mk * rin)
            if k0 > 0:  # the k0 == 0 result is the layer output, not an intermediate
                meter.hold(out.size)
            meter.record_stage(self.name, "rtl", f"out{k0}", K * q * rout * mk * rin, out.size)

        y = np.ascontiguousarray(out[:, :, 0].T)
        if self.bias is not None:
            y = y + self.bias[:, None]
        return y

    def _left_chain(self, record=None):
        """Prefix products of the output-side cores: (prod(m[:j+1]), r_{j+1})."""
        w = self.weight
        prefixes = [w.cores[0][0]]
        for k0 in range(1, w.d):
            prev = prefixes[-1]
            core = w.cores[k0]
            rin, mk, rout = core.shape
            nxt = (prev @ core.reshape(rin, mk * rout)).reshape(-1, rout)
            prefixes.append(nxt)
            if record is not None:
                record.append(("left", k0, prev.shape[0] * rin * mk * rout, nxt.size))
        return prefixes

    def _right_chain(self, record=None):
        """Suffix products of the input-side cores, keyed by core index."""
        w = self.weight
        d = w.d
        suffixes = {2 * d - 1: w.cores[-1][:, :, 0]}
        for k0 in range(2 * d - 2, d - 1, -1):
            core = w.cores[k0]
            rout, nc, rin = core.shape
            prev = suffixes[k0 + 1]
            nxt = (core.reshape(rout * nc, rin) @ prev).reshape(rout, -1)
            suffixes[k0] = nxt
            if record is not None:
                record.append(("right", k0, rout * nc * rin * prev.shape[1], nxt.size))
        return suffixes

    def forward_btt(self, x: np.ndarray, training: bool = False,
                    parallel: bool | None = None) -> np.ndarray:
        x = self._check_input(x)
        w = self.weight
        d, ranks = w.d, w.ranks
        K = x.shape[1]
        meter = self.meter
        meter.reset()
        use_parallel = self.parallel if parallel is None else parallel

        left_rec: list = []
        right_rec: list = []
        if use_parallel and d > 1:
            pool = _chain_pool()
            f_left = pool.submit(self._left_chain, left_rec)
            f_right = pool.submit(self._right_chain, right_rec)
            prefixes, suffixes = f_left.result(), f_right.result()
        else:
            prefixes = self._left_chain(left_rec)
            suffixes = self._right_chain(right_rec)

        # the paired chain steps form the first d-1 stages, independent of K
        for s in range(d - 1):
            muls = left_rec[s][2] + right_rec[s][2]
            held = left_rec[s][3] + right_rec[s][3]
            meter.add_muls(muls)
            meter.hold(held)
            meter.record_stage(self.name, "btt", f"chain{s}", muls, held)

        z_left = prefixes[-1]          # (M, r_d)
        z_right = suffixes[d]          # (r_d, N)
        z_mid = z_right @ x            # (r_d, K)
        meter.add_muls(ranks[d] * w.cols * K)
        meter.hold(z_mid.size)
        meter.record_stage(self.name, "btt", "mid", ranks[d] * w.cols * K, z_mid.size)

        y = z_left @ z_mid             # (M, K)
        meter.add_muls(w.rows * ranks[d] * K)
        meter.record_stage(self.name, "btt", "out", w.rows * ranks[d] * K, 0)
        if self.bias is not None:
            y = y + self.bias[:, None]

        if training:
            self._cache = {
                "x": x,
                "prefixes": prefixes,
                "suffixes": suffixes,
                "z_left": z_left,
                "z_right": z_right,
                "z_mid": z_mid,
                "u": None,
            }
        else:
            self._cache = None
        return y

    # -- backward ---------------------------------------------------------

    def detach_input(self) -> None:
        """Drop the cached input after it was staged elsewhere."""
        if self._cache is not None:
            self._cache["x"] = None

    def rebind_input(self, x: np.ndarray) -> None:
        """Restore a staged input activation before backward."""
        if self._cache is not None:
            self._cache["x"] = self._check_input(x)

    def _require_cache(self) -> dict:
        if self._cache is None:
            raise CacheError(f"{self.name}: no training-mode forward cached")
        return self._cache

    def _check_grad(self, dy: np.ndarray) -> np.ndarray:
        dy = np.asarray(dy, dtype=self.weight.dtype)
        if dy.ndim != 2 or dy.shape[0] != self.weight.rows:
            raise ShapeError(
                f"{self.name}: output gradient must be ({self.weight.rows}, K), got {dy.shape}"
            )
        return dy

    def _boundary_grad(self, dy: np.ndarray) -> np.ndarray:
        """dL/d(z_mid), shared by activation and input-side core gradients."""
        cache = self._require_cache()
        if cache["u"] is None or cache["u"][0] is not dy:
            u = cache["z_left"].T @ dy
            self.meter.add_muls(self.weight.rows * self.weight.ranks[self.weight.d] * dy.shape[1])
            cache["u"] = (dy, u)
        return cache["u"][1]

    def backward_activation(self, dy: np.ndarray) -> np.ndarray:
        dy = self._check_grad(dy)
        cache = self._require_cache()
        if dy.shape[1] != cache["z_mid"].shape[1]:
            raise ShapeError(f"{self.name}: gradient workload {dy.shape[1]} does not match "
                             f"cached forward {cache['z_mid'].shape[1]}")
        u = self._boundary_grad(dy)
        dx = cache["z_right"].T @ u
        self.meter.add_muls(self.weight.cols * u.shape[0] * u.shape[1])
        return dx

    def backward_cores(self, dy: np.ndarray) -> TTGrads:
        """Gradients of every core via fused fine-grained contractions.

        Both loops sweep one output (resp. input) slice at a time; the only
        scratch alive at any step is a boundary-rank vector plus one chain
        temporary, so peak scratch <= 2 * max(ranks) elements.
        """
        dy = self._check_grad(dy)
        cache = self._require_cache()
        x = cache["x"]
        if x is None:
            raise CacheError(f"{self.name}: input activation was staged out; rebind it first")
        if dy.shape[1] != x.shape[1]:
            raise ShapeError(f"{self.name}: gradient workload {dy.shape[1]} does not match "
                             f"cached forward {x.shape[1]}")
        w = self.weight
        d, m, n, ranks = w.d, w.out_modes, w.in_modes, w.ranks
        K = x.shape[1]
        meter = self.meter
        grads = [np.zeros_like(c) for c in w.cores]
        z_mid = cache["z_mid"]
        prefixes = cache["prefixes"]
        suffixes = cache["suffixes"]

        m_tail = [math.prod(m[k:]) for k in range(d + 1)]  # m_tail[k] = prod(m[k:])
        muls0 = meter.muls
        for p in range(w.rows):
            z = z_mid @ dy[p]
            meter.add_muls(ranks[d] * K)
            meter.scratch_alloc(z.size)
            t = z
            for k0 in range(d - 1, -1, -1):
                ik = (p // m_tail[k0 + 1]) % m[k0]
                if k0 > 0:
                    row = prefixes[k0 - 1][p // m_tail[k0]]
                    grads[k0][:, ik, :] += row[:, None] * t[None, :]
                    meter.add_muls(ranks[k0] * ranks[k0 + 1])
                    t_new = w.cores[k0][:, ik, :] @ t
                    meter.add_muls(ranks[k0] * ranks[k0 + 1])
                    meter.scratch_alloc(t_new.size)
                    meter.scratch_free(t.size)
                    t = t_new
                else:
                    grads[0][0, ik, :] += t
            meter.scratch_free(t.size)
        meter.record_stage(self.name, "bp_cores", "out_side", meter.muls - muls0,
                           meter.peak_scratch_elems)

        u = self._boundary_grad(dy)
        n_tail = [math.prod(n[c:]) for c in range(d + 1)]
        muls0 = meter.muls
        for q in range(w.cols):
            t = u @ x[q]
            meter.add_muls(ranks[d] * K)
            meter.scratch_alloc(t.size)
            for k0 in range(d, 2 * d):
                c = k0 - d
                jk = (q // n_tail[c + 1]) % n[c]
                if k0 < 2 * d - 1:
                    col = suffixes[k0 + 1][:, q % n_tail[c + 1]]
                    grads[k0][:, jk, :] += t[:, None] * col[None, :]
                    meter.add_muls(ranks[k0] * ranks[k0 + 1])
                    t_new = w.cores[k0][:, jk, :].T @ t
                    meter.add_muls(ranks[k0] * ranks[k0 + 1])
                    meter.scratch_alloc(t_new.size)
                    meter.scratch_free(t.size)
                    t = t_new
                else:
                    grads[k0][:, jk, 0] += t
            meter.scratch_free(t.size)
        meter.record_stage(self.name, "bp_cores", "in_side", meter.muls - muls0,
                           meter.peak_scratch_elems)

        bias_grad = dy.sum(axis=1) if self.bias is not None else None
        return TTGrads(grads, bias_grad)

    def backward(self, dy: np.ndarray) -> tuple[np.ndarray, TTGrads]:
        dx = self.backward_activation(dy)
        grads = self.backward_cores(dy)
        return dx, grads

    # -- update -----------------------------------------------------------

    def apply_sgd(self, grads: TTGrads, lr: float) -> None:
        if len(grads.cores) != len(self.weight.cores):
            raise ShapeError(f"{self.name}: expected {len(self.weight.cores)} core gradients")
        for core, g in zip(self.weight.cores, grads.cores):
            if core.shape != g.shape:
                raise ShapeError(f"{self.name}: gradient shape {g.shape} != core {core.shape}")
            core -= self.weight.dtype.type(lr) * g
        if self.bias is not None and grads.bias is not None:
            self.bias -= self.weight.dtype.type(lr) * grads.bias
