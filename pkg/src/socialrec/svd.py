"""Randomized truncated SVD and propagation over the low-rank user-user view."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape
from .errors import ShapeError
from .graph import SparseMatrix


@dataclass(frozen=True, eq=False)
class SvdFactors:
    u: np.ndarray  # M x k, orthonormal columns
    s: np.ndarray  # k singular values, descending
    v: np.ndarray  # N x k, orthonormal columns

    @property
    def rank(self) -> int:
        return int(self.s.shape[0])

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.v.T


def _orthonormal(y: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(y, mode="reduced")
    return q


def truncated_svd(
    a: SparseMatrix | np.ndarray,
    k: int,
    oversampling: int = 10,
    power_iters: int = 4,
    rng: np.random.Generator | int | None = None,
) -> SvdFactors:
    """Rank-``k`` factorization by a Gaussian range finder with power iterations.

    Works on either a :class:`SparseMatrix` or a dense array. Signs are fixed
    so that the largest-magnitude entry of each left singular vector is
    positive, which makes the result reproducible for a given ``rng``.
    """
    if isinstance(a, SparseMatrix):
        fwd, adj = a.matmul, a.T.matmul
    else:
        dense = np.asarray(a, dtype=np.float64)
        fwd, adj = dense.__matmul__, dense.T.__matmul__
    m, n = a.shape
    if not 1 <= k <= min(m, n):
        raise ValueError(f"rank k={k} outside [1, {min(m, n)}]")
    if oversampling < 0 or power_iters < 0:
        raise ValueError("oversampling and power_iters must be non-negative")
    rng = np.random.default_rng(rng)
    width = min(k + oversampling, m, n)
    omega = rng.standard_normal((n, width))
    q = _orthonormal(fwd(omega))
    for _ in range(power_iters):
        # re-orthonormalize between half steps to keep small directions
        q = _orthonormal(fwd(_orthonormal(adj(q))))
    b_t = adj(q)  # N x width, equals (Q^T A)^T
    vb, s, ub_t = np.linalg.svd(b_t, full_matrices=False)
    u = q @ ub_t.T[:, :k]
    v = vb[:, :k]
    s = s[:k]
    flip = np.sign(u[np.argmax(np.abs(u), axis=0), np.arange(k)])
    flip[flip == 0] = 1.0
    return SvdFactors(u * flip, s.copy(), v * flip)


def propagate_reconstructed(tape: Tape, factors: SvdFactors, user_emb: int, n_layers: int) -> int:
    """Layer mean over ``U diag(s) U^T`` applied in factored form.

    The ``M x M`` matrix is never formed; the factors enter as constants.
    """
    if tape.shape(user_emb)[0] != factors.u.shape[0]:
        raise ShapeError(f"embedding {tape.shape(user_emb)} does not fit factors {factors.u.shape}")
    if n_layers == 0:
        return user_emb
    u = tape.const(factors.u)
    u_t = tape.const(np.ascontiguousarray(factors.u.T))
    s_col = tape.const(factors.s.reshape(-1, 1))
    layers = [user_emb]
    for _ in range(n_layers):
        coeff = tape.mul(s_col, tape.matmul(u_t, layers[-1]))
        layers.append(tape.matmul(u, coeff))
    return tape.scale(tape.add_n(layers), 1.0 / len(layers))
