"""Sparse adjacencies, symmetric normalization and layer-mean propagation."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _accel
from .autodiff import Tape
from .errors import ShapeError


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Row-compressed real matrix (sorted, duplicate-free column indices)."""

    shape: tuple[int, int]
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        n_rows, n_cols = self.shape
        indptr, indices, data = self.indptr, self.indices, self.data
        if indptr.shape != (n_rows + 1,) or indptr[0] != 0 or indptr[-1] != indices.shape[0]:
            raise ValueError("row offsets inconsistent with shape / nnz")
        if np.any(np.diff(indptr) < 0):
            raise ValueError("row offsets must be monotone")
        if indices.shape != data.shape:
            raise ValueError("indices and values differ in length")
        if indices.size:
            if indices.min() < 0 or indices.max() >= n_cols:
                raise ValueError("column index out of range")
            step = np.diff(indices)
            row_start = np.zeros(indices.size, dtype=bool)
            row_start[indptr[:-1][np.diff(indptr) > 0]] = True
            if np.any((step <= 0) & ~row_start[1:]):
                raise ValueError("column indices must be strictly increasing within a row")
        if not np.all(np.isfinite(data)):
            raise ValueError("non-finite sparse values")

    @classmethod
    def from_coo(cls, rows, cols, values, shape) -> "SparseMatrix":
        """Build from triplets; duplicate coordinates are summed."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.broadcast_to(np.asarray(values, dtype=np.float64), rows.shape)
        n_rows, n_cols = int(shape[0]), int(shape[1])
        if rows.size and (rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols):
            raise ValueError("coordinate out of range")
        key = rows * n_cols + cols
        order = np.argsort(key, kind="stable")
        key, values = key[order], values[order]
        uniq, start = np.unique(key, return_index=True)
        summed = np.add.reduceat(values, start) if uniq.size else np.zeros(0)
        r = uniq // max(n_cols, 1)
        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(r, minlength=n_rows), out=indptr[1:])
        return cls((n_rows, n_cols), indptr, uniq % max(n_cols, 1), summed.astype(np.float64))

    @classmethod
    def from_dense(cls, dense) -> "SparseMatrix":
        dense = np.asarray(dense, dtype=np.float64)
        r, c = np.nonzero(dense)
        return cls.from_coo(r, c, dense[r, c], dense.shape)

    @property
    def nnz(self) -> int:
        return int(self.indices.shape[0])

    def row_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))

    def row_degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.row_ids(), weights=self.data, minlength=self.shape[0])

    def col_sums(self) -> np.ndarray:
        return np.bincount(self.indices, weights=self.data, minlength=self.shape[1])

    def matmul(self, x) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] != self.shape[1]:
            raise ShapeError(f"sparse matmul mismatch: {self.shape} @ {x.shape}")
        return _accel.spmm(self.indptr, self.indices, self.data, x)

    @cached_property
    def T(self) -> "SparseMatrix":
        return SparseMatrix.from_coo(self.indices, self.row_ids(), self.data, self.shape[::-1])

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row_ids(), self.indices] = self.data
        return out

    def row(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]


def _require_binary(m: SparseMatrix, what: str) -> None:
    if not np.all(m.data == 1.0):
        raise ValueError(f"{what} must be binary with explicit ones only")


def normalize_bipartite(a: SparseMatrix) -> tuple[SparseMatrix, SparseMatrix]:
    """Scale edge (i, j) by ``1/sqrt(deg_u(i) * deg_v(j))``; returns the matrix and its transpose."""
    if a.shape[0] == 0 or a.shape[1] == 0:
        raise ValueError("empty interaction matrix")
    _require_binary(a, "interaction matrix")
    deg_u = a.row_sums()
    deg_v = a.col_sums()
    data = a.data / np.sqrt(deg_u[a.row_ids()] * deg_v[a.indices])
    norm = SparseMatrix(a.shape, a.indptr, a.indices, data)
    return norm, norm.T


def normalize_social(s: SparseMatrix) -> SparseMatrix:
    """Symmetric normalization of an undirected, loop-free, binary user graph."""
    if s.shape[0] != s.shape[1]:
        raise ValueError(f"social matrix must be square, got {s.shape}")
    if s.nnz:
        _require_binary(s, "social matrix")
        if np.any(s.row_ids() == s.indices):
            raise ValueError("social matrix has self-loops")
        st = s.T
        if not (np.array_equal(st.indptr, s.indptr) and np.array_equal(st.indices, s.indices)):
            raise ValueError("social matrix is not symmetric")
    deg = s.row_sums()
    data = s.data / np.sqrt(deg[s.row_ids()] * deg[s.indices])
    return SparseMatrix(s.shape, s.indptr, s.indices, data)


def _layer_mean(tape: Tape, layers: list[int]) -> int:
    if len(layers) == 1:
        return layers[0]
    return tape.scale(tape.add_n(layers), 1.0 / len(layers))


def propagate_interaction(
    tape: Tape, adj: SparseMatrix, user_emb: int, item_emb: int, n_layers: int
) -> tuple[int, int]:
    """Alternate user/item propagation over the normalized bipartite graph.

    Returns the layer means of the user and item embeddings (layers 0..L).
    """
    m, n = adj.shape
    if tape.shape(user_emb)[0] != m or tape.shape(item_emb)[0] != n:
        raise ShapeError(
            f"embedding rows {tape.shape(user_emb)}, {tape.shape(item_emb)} do not fit graph {adj.shape}"
        )
    if tape.shape(user_emb)[1] != tape.shape(item_emb)[1]:
        raise ShapeError("user and item embeddings differ in width")
    users, items = [user_emb], [item_emb]
    for _ in range(n_layers):
        u_next = tape.spmm(adj, items[-1])
        v_next = tape.spmm(adj.T, users[-1])
        users.append(u_next)
        items.append(v_next)
    return _layer_mean(tape, users), _layer_mean(tape, items)


def propagate_social(tape: Tape, social: SparseMatrix, user_emb: int, n_layers: int) -> int:
    """Layer mean of repeated propagation over the normalized social graph."""
    if tape.shape(user_emb)[0] != social.shape[0]:
        raise ShapeError(f"embedding {tape.shape(user_emb)} does not fit graph {social.shape}")
    layers = [user_emb]
    for _ in range(n_layers):
        layers.append(tape.spmm(social, layers[-1]))
    return _layer_mean(tape, layers)
