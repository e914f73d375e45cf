"""Dense tensor contraction, index folding, and low-rank factor containers.

Dense tensors are plain ``numpy.ndarray`` objects. All flattening in this
package is row-major (C order, last index fastest), fixed once here so that
every reconstruction oracle, lookup, and cost count is reproducible.

Two factor containers are provided:

``TTWeight``
    A weight matrix ``W`` of shape ``(M, N)`` with ``M = prod(out_modes)``
    and ``N = prod(in_modes)``, held as a chain of ``2d`` order-3 cores.
    The first ``d`` cores carry the output modes, the last ``d`` the input
    modes. Core ``k`` (0-based) has shape ``(ranks[k], mode_k, ranks[k+1])``
    and boundary ranks are 1.

``TTMTable``
    A matrix held as ``d`` order-4 cores, each carrying one row mode and
    one column mode: core ``k`` has shape
    ``(ranks[k], row_modes[k], col_modes[k], ranks[k+1])``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ShapeError",
    "contract",
    "FoldingMap",
    "TTWeight",
    "TTMTable",
    "tt_reconstruct",
    "tt_as_matrix",
    "ttm_reconstruct",
    "tt_param_count",
    "ttm_param_count",
]


class ShapeError(ValueError):
    """Raised when tensor shapes or mode sizes are incompatible."""


def contract(a: np.ndarray, b: np.ndarray, s: int, t: int) -> np.ndarray:
    """Contract mode ``s`` of ``a`` against mode ``t`` of ``b``.

    The result has ``a``'s remaining modes followed by ``b``'s remaining
    modes:  ``C[i..., j...] = sum_c A[i.., c, i..] * B[j.., c, j..]``.
    """
    if not (0 <= s < a.ndim):
        raise ShapeError(f"mode {s} out of range for order-{a.ndim} tensor")
    if not (0 <= t < b.ndim):
        raise ShapeError(f"mode {t} out of range for order-{b.ndim} tensor")
    if a.shape[s] != b.shape[t]:
        raise ShapeError(
            f"cannot contract mode {s} of shape {a.shape} with mode {t} of "
            f"shape {b.shape}: {a.shape[s]} != {b.shape[t]}"
        )
    return np.tensordot(a, b, axes=(s, t))


@dataclass(frozen=True)
class FoldingMap:
    """Fixed bijection between a flat index range and a multi-index box.

    ``modes`` are the box extents; flat indices are row-major, i.e. the
    last mode varies fastest. ``fold``/``unfold`` reshape vectors and
    tensors accordingly, ``encode``/``decode`` translate single indices.
    """

    modes: tuple[int, ...]

    def __post_init__(self):
        if not self.modes or any(m < 1 for m in self.modes):
            raise ShapeError(f"mode sizes must be >= 1, got {self.modes}")
        object.__setattr__(self, "modes", tuple(int(m) for m in self.modes))

    @property
    def size(self) -> int:
        return math.prod(self.modes)

    def fold(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        if v.size != self.size:
            raise ShapeError(f"vector of length {v.size} does not fold to {self.modes}")
        return v.reshape(self.modes)

    def unfold(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t)
        if tuple(t.shape) != self.modes:
            raise ShapeError(f"tensor of shape {t.shape} does not match modes {self.modes}")
        return t.reshape(-1)

    def encode(self, multi: tuple[int, ...]) -> int:
        return int(np.ravel_multi_index(multi, self.modes))

    def decode(self, flat: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(flat, self.modes))


def _check_chain(cores, ranks, what: str) -> None:
    if ranks[0] != 1 or ranks[-1] != 1:
        raise ShapeError(f"{what} boundary ranks must be 1, got {ranks[0]} and {ranks[-1]}")
    for k, core in enumerate(cores):
        if core.shape[0] != ranks[k] or core.shape[-1] != ranks[k + 1]:
            raise ShapeError(
                f"{what} core {k} has ranks ({core.shape[0]}, {core.shape[-1]}), "
                f"expected ({ranks[k]}, {ranks[k + 1]})"
            )


@dataclass
class TTWeight:
    """A matrix in tensor-train form: ``2d`` order-3 cores linked by ranks."""

    cores: list[np.ndarray]
    out_modes: tuple[int, ...]
    in_modes: tuple[int, ...]

    def __post_init__(self):
        self.out_modes = tuple(int(m) for m in self.out_modes)
        self.in_modes = tuple(int(n) for n in self.in_modes)
        d = len(self.out_modes)
        if d == 0 or len(self.in_modes) != d:
            raise ShapeError("out_modes and in_modes must be nonempty and equally long")
        if len(self.cores) != 2 * d:
            raise ShapeError(f"expected {2 * d} cores, got {len(self.cores)}")
        modes = self.out_modes + self.in_modes
        for k, core in enumerate(self.cores):
            if core.ndim != 3:
                raise ShapeError(f"core {k} must be order 3, got order {core.ndim}")
            if core.shape[1] != modes[k]:
                raise ShapeError(f"core {k} carries mode {core.shape[1]}, expected {modes[k]}")
        _check_chain(self.cores, self.ranks, "TT")

    @property
    def d(self) -> int:
        return len(self.out_modes)

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple([self.cores[0].shape[0]] + [c.shape[-1] for c in self.cores])

    @property
    def rows(self) -> int:
        return math.prod(self.out_modes)

    @property
    def cols(self) -> int:
        return math.prod(self.in_modes)

    @property
    def dtype(self):
        return self.cores[0].dtype

    @property
    def row_map(self) -> FoldingMap:
        return FoldingMap(self.out_modes)

    @property
    def col_map(self) -> FoldingMap:
        return FoldingMap(self.in_modes)

    @classmethod
    def random(cls, out_modes, in_modes, ranks, rng: np.random.Generator,
               dtype=np.float32, scale: float | None = None) -> "TTWeight":
        """Sample cores i.i.d. uniform on [-s, s].

        The default ``s`` makes the reconstructed matrix entries have
        variance ~ 1/N (fan-in): an entry is a sum over all internal rank
        paths of products of 2d core entries, so per-entry core variance
        ``v`` must satisfy ``prod(internal ranks) * v**(2d) = 1/N``.
        """
        out_modes = tuple(out_modes)
        in_modes = tuple(in_modes)
        ranks = tuple(ranks)
        modes = out_modes + in_modes
        n_cores = len(modes)
        if len(ranks) != n_cores + 1:
            raise ShapeError(f"expected {n_cores + 1} ranks, got {len(ranks)}")
        if scale is None:
            paths = math.prod(ranks[1:-1])
            fan_in = math.prod(in_modes)
            v = (fan_in * paths) ** (-1.0 / n_cores)
            scale = math.sqrt(3.0 * v)
        cores = [
            rng.uniform(-scale, scale, size=(ranks[k], modes[k], ranks[k + 1])).astype(dtype)
            for k in range(n_cores)
        ]
        return cls(cores, out_modes, in_modes)


@dataclass
class TTMTable:
    """A matrix as a chain of order-4 cores, one (row, col) mode pair each."""

    cores: list[np.ndarray]
    row_modes: tuple[int, ...]
    col_modes: tuple[int, ...]

    def __post_init__(self):
        self.row_modes = tuple(int(m) for m in self.row_modes)
        self.col_modes = tuple(int(n) for n in self.col_modes)
        d = len(self.row_modes)
        if d == 0 or len(self.col_modes) != d:
            raise ShapeError("row_modes and col_modes must be nonempty and equally long")
        if len(self.cores) != d:
            raise ShapeError(f"expected {d} cores, got {len(self.cores)}")
        for k, core in enumerate(self.cores):
            if core.ndim != 4:
                raise ShapeError(f"core {k} must be order 4, got order {core.ndim}")
            if core.shape[1] != self.row_modes[k] or core.shape[2] != self.col_modes[k]:
                raise ShapeError(
                    f"core {k} carries modes {core.shape[1:3]}, expected "
                    f"({self.row_modes[k]}, {self.col_modes[k]})"
                )
        _check_chain(self.cores, self.ranks, "TTM")

    @property
    def d(self) -> int:
        return len(self.row_modes)

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple([self.cores[0].shape[0]] + [c.shape[-1] for c in self.cores])

    @property
    def rows(self) -> int:
        return math.prod(self.row_modes)

    @property
    def cols(self) -> int:
        return math.prod(self.col_modes)

    @property
    def dtype(self):
        return self.cores[0].dtype

    @classmethod
    def random(cls, row_modes, col_modes, ranks, rng: np.random.Generator,
               dtype=np.float32, scale: float | None = None) -> "TTMTable":
        row_modes = tuple(row_modes)
        col_modes = tuple(col_modes)
        ranks = tuple(ranks)
        d = len(row_modes)
        if len(ranks) != d + 1:
            raise ShapeError(f"expected {d + 1} ranks, got {len(ranks)}")
        if scale is None:
            paths = math.prod(ranks[1:-1])
            v = (math.prod(row_modes) * paths) ** (-1.0 / d)
            scale = math.sqrt(3.0 * v)
        cores = [
            rng.uniform(-scale, scale,
                        size=(ranks[k], row_modes[k], col_modes[k], ranks[k + 1])).astype(dtype)
            for k in range(d)
        ]
        return cls(cores, row_modes, col_modes)


def tt_reconstruct(w: TTWeight) -> np.ndarray:
    """Materialize the order-2d tensor represented by a TT chain."""
    t = w.cores[0]
    for core in w.cores[1:]:
        t = np.tensordot(t, core, axes=(t.ndim - 1, 0))
    # strip the two singleton boundary rank axes
    return t.reshape(t.shape[1:-1])


def tt_as_matrix(w: TTWeight) -> np.ndarray:
    """Materialize the (rows x cols) matrix represented by a TT chain."""
    return tt_reconstruct(w).reshape(w.rows, w.cols)


def ttm_reconstruct(t: TTMTable) -> np.ndarray:
    """Materialize the (rows x cols) matrix represented by a TTM chain."""
    a = t.cores[0]
    for core in t.cores[1:]:
        a = np.tensordot(a, core, axes=(a.ndim - 1, 0))
    a = a.reshape(a.shape[1:-1])  # (m1, n1, m2, n2, ...)
    d = t.d
    perm = list(range(0, 2 * d, 2)) + list(range(1, 2 * d, 2))
    return a.transpose(perm).reshape(t.rows, t.cols)


def tt_param_count(w: TTWeight) -> int:
    return sum(c.size for c in w.cores)


def ttm_param_count(t: TTMTable) -> int:
    return sum(c.size for c in t.cores)
