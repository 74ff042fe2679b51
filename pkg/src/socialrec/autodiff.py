"""Reverse-mode automatic differentiation over dense 2-D float64 matrices.

A :class:`Tape` records nodes in insertion order; every node stores its forward
value and whatever it needs for the adjoint. Ops are methods on the tape that
take and return integer node ids::

    tape = Tape()
    x = tape.param(np.array([[3.0]]))
    loss = tape.sumsq(x)
    grads = backward(tape, loss)   # {x: [[6.0]]}

Sparse matrices (anything with ``matmul``, ``shape`` and ``T``) enter only as
constants of :meth:`Tape.spmm`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from . import _accel
from .errors import NumericalError, ShapeError


@dataclass(slots=True)
class Node:
    op: str
    parents: tuple[int, ...]
    value: np.ndarray
    aux: Any = None
    needs_grad: bool = False


def _as_matrix(value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"expected a matrix, got array of shape {arr.shape}")
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    axes = tuple(ax for ax in range(2) if shape[ax] == 1 and grad.shape[ax] != 1)
    return grad.sum(axis=axes, keepdims=True)


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(_log_sigmoid(x))


def _unit_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    safe = np.where(norms > 0.0, norms, 1.0)
    return x / safe[:, None] * (norms > 0.0)[:, None], norms


class Tape:
    """Computation record for one forward/backward pass.

    Node values are never mutated after creation. A tape is meant for a single
    thread and a single training step.
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def value(self, node: int) -> np.ndarray:
        return self.nodes[node].value

    def shape(self, node: int) -> tuple[int, int]:
        return self.nodes[node].value.shape

    def _push(self, op: str, parents: Sequence[int], value: np.ndarray, aux=None) -> int:
        # a finite sum implies finite entries; only scan on the rare miss
        if not math.isfinite(value.sum()) and not np.all(np.isfinite(value)):
            raise NumericalError(f"non-finite output from op {op!r} (node {len(self.nodes)})")
        needs = any(self.nodes[p].needs_grad for p in parents)
        self.nodes.append(Node(op, tuple(parents), value, aux, needs))
        return len(self.nodes) - 1

    def _check(self, *ids: int) -> None:
        for i in ids:
            if not (0 <= i < len(self.nodes)):
                raise IndexError(f"node id {i} not on this tape")

    # -- leaves -----------------------------------------------------------

    def param(self, value) -> int:
        """Trainable leaf; ``backward`` reports its gradient."""
        arr = _as_matrix(value)
        idx = self._push("param", (), arr)
        self.nodes[idx].needs_grad = True
        return idx

    def const(self, value) -> int:
        return self._push("const", (), _as_matrix(value))

    # -- linear algebra ---------------------------------------------------

    def matmul(self, a: int, b: int) -> int:
        self._check(a, b)
        va, vb = self.value(a), self.value(b)
        if va.shape[1] != vb.shape[0]:
            raise ShapeError(f"matmul shape mismatch: {va.shape} @ {vb.shape}")
        return self._push("matmul", (a, b), va @ vb)

    def spmm(self, sparse, x: int) -> int:
        """Constant sparse matrix times a dense node."""
        self._check(x)
        vx = self.value(x)
        if sparse.shape[1] != vx.shape[0]:
            raise ShapeError(f"spmm shape mismatch: {sparse.shape} @ {vx.shape}")
        return self._push("spmm", (x,), sparse.matmul(vx), aux=sparse)

    def transpose(self, a: int) -> int:
        self._check(a)
        return self._push("transpose", (a,), np.ascontiguousarray(self.value(a).T))

    def _broadcast_pair(self, name: str, a: int, b: int) -> None:
        self._check(a, b)
        sa, sb = self.shape(a), self.shape(b)
        for x, y in zip(sa, sb):
            if x != y and x != 1 and y != 1:
                raise ShapeError(f"{name} shape mismatch: {sa} vs {sb}")

    def add(self, a: int, b: int) -> int:
        self._broadcast_pair("add", a, b)
        return self._push("add", (a, b), self.value(a) + self.value(b))

    def sub(self, a: int, b: int) -> int:
        self._broadcast_pair("sub", a, b)
        return self._push("sub", (a, b), self.value(a) - self.value(b))

    def mul(self, a: int, b: int) -> int:
        """Elementwise product (row/column/scalar broadcasting allowed)."""
        self._broadcast_pair("mul", a, b)
        return self._push("mul", (a, b), self.value(a) * self.value(b))

    def scale(self, a: int, c: float) -> int:
        self._check(a)
        return self._push("scale", (a,), self.value(a) * float(c), aux=float(c))

    def add_n(self, nodes: Sequence[int]) -> int:
        out = nodes[0]
        for n in nodes[1:]:
            out = self.add(out, n)
        return out

    # -- elementwise nonlinearities ---------------------------------------

    def tanh(self, a: int) -> int:
        self._check(a)
        return self._push("tanh", (a,), np.tanh(self.value(a)))

    def exp(self, a: int) -> int:
        self._check(a)
        with np.errstate(over="ignore"):
            out = np.exp(self.value(a))
        return self._push("exp", (a,), out)

    def log(self, a: int) -> int:
        self._check(a)
        va = self.value(a)
        if np.any(va <= 0.0):
            raise NumericalError("log of non-positive entry")
        return self._push("log", (a,), np.log(va))

    def log_sigmoid(self, a: int) -> int:
        self._check(a)
        return self._push("log_sigmoid", (a,), _log_sigmoid(self.value(a)))

    # -- reductions and row ops -------------------------------------------

    def softmax_rows(self, a: int) -> int:
        self._check(a)
        va = self.value(a)
        z = np.exp(va - va.max(axis=1, keepdims=True))
        return self._push("softmax_rows", (a,), z / z.sum(axis=1, keepdims=True))

    def sum_rows(self, a: int) -> int:
        """Row sums as an ``m x 1`` column."""
        self._check(a)
        return self._push("sum_rows", (a,), self.value(a).sum(axis=1, keepdims=True))

    def sum_all(self, a: int) -> int:
        self._check(a)
        return self._push("sum_all", (a,), np.array([[self.value(a).sum()]]))

    def mean_all(self, a: int) -> int:
        self._check(a)
        return self._push("mean_all", (a,), np.array([[self.value(a).mean()]]))

    def sumsq(self, a: int) -> int:
        """Squared Frobenius norm."""
        self._check(a)
        va = self.value(a)
        return self._push("sumsq", (a,), np.array([[np.vdot(va, va)]]))

    def gather_rows(self, a: int, index) -> int:
        self._check(a)
        idx = np.asarray(index, dtype=np.int64).reshape(-1)
        n = self.shape(a)[0]
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            bad = idx[(idx < 0) | (idx >= n)][0]
            raise IndexError(f"gather index {bad} out of range for {n} rows")
        return self._push("gather_rows", (a,), self.value(a)[idx], aux=idx)

    def mask_mul(self, a: int, mask) -> int:
        """Multiply by a constant {0,1} mask; no gradient flows into the mask."""
        self._check(a)
        m = np.asarray(mask)
        if m.shape != self.shape(a):
            raise ShapeError(f"mask shape {m.shape} does not match {self.shape(a)}")
        if m.dtype != np.bool_:
            if not np.all((m == 0) | (m == 1)):
                raise ValueError("mask must be {0,1}-valued")
            m = m.astype(np.bool_)
        return self._push("mask_mul", (a,), self.value(a) * m, aux=m)

    def cosine_matrix(self, x: int, y: int) -> int:
        """``out[i, j] = cos(x_i, y_j)``; rows with zero norm give cosine 0."""
        self._check(x, y)
        vx, vy = self.value(x), self.value(y)
        if vx.shape[1] != vy.shape[1]:
            raise ShapeError(f"cosine_matrix width mismatch: {vx.shape} vs {vy.shape}")
        ux, nx = _unit_rows(vx)
        uy, ny = _unit_rows(vy)
        return self._push("cosine_matrix", (x, y), ux @ uy.T, aux=(ux, nx, uy, ny))


# ---------------------------------------------------------------------------
# adjoints: each returns one gradient (or None) per parent
# ---------------------------------------------------------------------------


def _unit_row_adjoint(g_unit, unit, norms):
    proj = np.einsum("ij,ij->i", g_unit, unit)
    safe = np.where(norms > 0.0, norms, 1.0)
    return (g_unit - unit * proj[:, None]) / safe[:, None] * (norms > 0.0)[:, None]


def _adj_matmul(t, n, g):
    a, b = (t.nodes[p].value for p in n.parents)
    return g @ b.T, a.T @ g


def _adj_add(t, n, g):
    a, b = (t.nodes[p].value for p in n.parents)
    return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


def _adj_sub(t, n, g):
    a, b = (t.nodes[p].value for p in n.parents)
    return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)


def _adj_mul(t, n, g):
    a, b = (t.nodes[p].value for p in n.parents)
    return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


def _adj_gather(t, n, g):
    src = t.nodes[n.parents[0]].value
    return (_accel.scatter_add_rows(n.aux, np.ascontiguousarray(g), src.shape[0]),)


def _adj_cosine(t, n, g):
    ux, nx, uy, ny = n.aux
    return _unit_row_adjoint(g @ uy, ux, nx), _unit_row_adjoint(g.T @ ux, uy, ny)


def _adj_softmax(t, n, g):
    y = n.value
    return (y * (g - np.sum(g * y, axis=1, keepdims=True)),)


_ADJOINTS: dict[str, Callable] = {
    "matmul": _adj_matmul,
    "spmm": lambda t, n, g: (n.aux.T.matmul(g),),
    "transpose": lambda t, n, g: (g.T,),
    "add": _adj_add,
    "sub": _adj_sub,
    "mul": _adj_mul,
    "scale": lambda t, n, g: (g * n.aux,),
    "tanh": lambda t, n, g: (g * (1.0 - n.value**2),),
    "exp": lambda t, n, g: (g * n.value,),
    "log": lambda t, n, g: (g / t.nodes[n.parents[0]].value,),
    "log_sigmoid": lambda t, n, g: (g * _sigmoid(-t.nodes[n.parents[0]].value),),
    "softmax_rows": _adj_softmax,
    "sum_rows": lambda t, n, g: (np.broadcast_to(g, t.nodes[n.parents[0]].value.shape),),
    "sum_all": lambda t, n, g: (np.full(t.nodes[n.parents[0]].value.shape, g[0, 0]),),
    "mean_all": lambda t, n, g: (
        np.full(t.nodes[n.parents[0]].value.shape, g[0, 0] / t.nodes[n.parents[0]].value.size),
    ),
    "sumsq": lambda t, n, g: (2.0 * g[0, 0] * t.nodes[n.parents[0]].value,),
    "gather_rows": _adj_gather,
    "mask_mul": lambda t, n, g: (g * n.aux,),
    "cosine_matrix": _adj_cosine,
}


def backward(tape: Tape, loss: int) -> dict[int, np.ndarray]:
    """Gradients of the scalar node ``loss`` for every reachable ``param`` leaf."""
    if tape.shape(loss) != (1, 1):
        raise ShapeError(f"loss must be 1x1, got {tape.shape(loss)}")
    grads: dict[int, np.ndarray] = {loss: np.ones((1, 1))}
    for i in range(loss, -1, -1):
        g = grads.get(i)
        node = tape.nodes[i]
        if g is None or not node.parents:
            continue
        for p, gp in zip(node.parents, _ADJOINTS[node.op](tape, node, g)):
            if gp is None or not tape.nodes[p].needs_grad:
                continue
            if p in grads:
                grads[p] = grads[p] + gp
            elif gp.flags.c_contiguous and gp.dtype == np.float64:
                grads[p] = gp  # adjoints never mutate, so sharing is safe
            else:
                grads[p] = np.ascontiguousarray(gp, dtype=np.float64)
        if i != loss:
            del grads[i]
    result = {i: g for i, g in grads.items() if tape.nodes[i].op == "param"}
    for i, g in result.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter node {i}")
    return result


def grad_check(
    build: Callable[[Tape, list[int]], int],
    params: Sequence[np.ndarray],
    epsilon: float = 1e-6,
) -> float:
    """Max relative error between ``backward`` and central differences.

    ``build(tape, param_ids)`` must construct a scalar loss on the given tape
    and return its node id. The error per entry is
    ``|analytic - numeric| / max(1, |analytic|)``.
    """
    if not 0.0 < epsilon <= 1e-2:
        raise ValueError("epsilon must lie in (0, 1e-2]")
    params = [_as_matrix(p) for p in params]

    def evaluate(values):
        tape = Tape()
        ids = [tape.param(v) for v in values]
        out = build(tape, ids)
        return tape, ids, out

    tape, ids, out = evaluate(params)
    grads = backward(tape, out)
    worst = 0.0
    for k, p in enumerate(params):
        analytic = grads.get(ids[k], np.zeros_like(p))
        for coord in np.ndindex(p.shape):
            vals = []
            for sign in (1.0, -1.0):
                shifted = [q.copy() for q in params]
                shifted[k][coord] += sign * epsilon
                try:
                    t2, _, o2 = evaluate(shifted)
                except NumericalError as exc:
                    raise NumericalError(f"parameter {k} coordinate {coord}: {exc}") from exc
                vals.append(t2.value(o2)[0, 0])
            numeric = (vals[0] - vals[1]) / (2.0 * epsilon)
            if not np.isfinite(numeric):
                raise NumericalError(f"non-finite difference at parameter {k} coordinate {coord}")
            a = analytic[coord]
            worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    return worst
