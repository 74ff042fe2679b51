"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is picked once at import time. Set ``SOCIALREC_DISABLE_NUMBA=1``
to force the numpy implementations (useful for debugging and for the
benchmark). Both variants are always importable under explicit names so they
can be compared against each other.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba

    # prefer OpenMP/workqueue; an outdated system TBB only produces warnings
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("SOCIALREC_DISABLE_NUMBA", "0").lower() in (
    "",
    "0",
    "false",
    "no",
)


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def spmm_numpy(indptr, indices, data, x):
    """CSR (rows given by ``indptr``) times dense ``x``."""
    n_rows = indptr.shape[0] - 1
    out = np.zeros((n_rows, x.shape[1]), dtype=np.float64)
    if indices.shape[0] == 0:
        return out
    contrib = data[:, None] * x[indices]
    starts = indptr[:-1]
    nonempty = indptr[1:] > starts
    # consecutive non-empty starts delimit exactly one row each
    out[nonempty] = np.add.reduceat(contrib, starts[nonempty], axis=0)
    return out


def scatter_add_rows_numpy(idx, values, n_rows):
    out = np.zeros((n_rows, values.shape[1]), dtype=np.float64)
    np.add.at(out, idx, values)
    return out


def adam_update_numpy(param, grad, m, v, lr, beta1, beta2, eps, c1, c2):
    """In-place bias-corrected Adam update of ``param``, ``m`` and ``v``."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    param -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def topk_numpy(scores, excl_indptr, excl_indices, k):
    """Top-``k`` column ids per row, score descending then id ascending.

    ``excl_indptr``/``excl_indices`` is a CSR pattern (one row per score row)
    of columns removed before ranking. Rows with fewer than ``k`` candidates
    are padded with -1.
    """
    b, n = scores.shape
    s = np.array(scores, dtype=np.float64, copy=True)
    rows = np.repeat(np.arange(b), np.diff(excl_indptr))
    s[rows, excl_indices] = -np.inf
    kk = min(k, n)
    if kk == 0:
        return np.full((b, k), -1, dtype=np.int64)
    # everything at or above the kk-th largest score, ties included, then an
    # exact (score desc, id asc) sort of that short candidate list
    kth = -np.partition(-s, kk - 1, axis=1)[:, kk - 1]
    order = np.empty((b, kk), dtype=np.int64)
    for r in range(b):
        cand = np.flatnonzero(s[r] >= kth[r])
        order[r] = cand[np.lexsort((cand, -s[r, cand]))][:kk]
    avail = n - np.diff(excl_indptr)
    out = np.full((b, k), -1, dtype=np.int64)
    out[:, :kk] = order
    out[np.arange(k)[None, :] >= avail[:, None]] = -1
    return out


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @numba.njit(cache=True, parallel=True)
    def spmm_numba(indptr, indices, data, x):
        n_rows = indptr.shape[0] - 1
        d = x.shape[1]
        out = np.zeros((n_rows, d), dtype=np.float64)
        for r in numba.prange(n_rows):
            for p in range(indptr[r], indptr[r + 1]):
                c = indices[p]
                v = data[p]
                for j in range(d):
                    out[r, j] += v * x[c, j]
        return out

    @numba.njit(cache=True)
    def scatter_add_rows_numba(idx, values, n_rows):
        d = values.shape[1]
        out = np.zeros((n_rows, d), dtype=np.float64)
        for p in range(idx.shape[0]):
            r = idx[p]
            for j in range(d):
                out[r, j] += values[p, j]
        return out

    @numba.njit(cache=True)
    def adam_update_numba(param, grad, m, v, lr, beta1, beta2, eps, c1, c2):
        p, g, mf, vf = param.ravel(), grad.ravel(), m.ravel(), v.ravel()
        for i in range(p.shape[0]):
            mf[i] = beta1 * mf[i] + (1.0 - beta1) * g[i]
            vf[i] = beta2 * vf[i] + (1.0 - beta2) * g[i] * g[i]
            p[i] -= lr * (mf[i] / c1) / (np.sqrt(vf[i] / c2) + eps)

    @numba.njit(cache=True)
    def topk_numba(scores, excl_indptr, excl_indices, k):
        b, n = scores.shape
        out = np.full((b, k), -1, dtype=np.int64)
        best = np.empty(k, dtype=np.float64)
        skip = np.zeros(n, dtype=np.bool_)
        for r in range(b):
            for p in range(excl_indptr[r], excl_indptr[r + 1]):
                skip[excl_indices[p]] = True
            count = 0
            for j in range(n):
                if skip[j]:
                    continue
                s = scores[r, j]
                if count < k:
                    pos = count
                    count += 1
                elif s > best[k - 1]:
                    pos = k - 1
                else:
                    continue
                # strict comparison keeps earlier (smaller) ids ahead on ties
                while pos > 0 and best[pos - 1] < s:
                    best[pos] = best[pos - 1]
                    out[r, pos] = out[r, pos - 1]
                    pos -= 1
                best[pos] = s
                out[r, pos] = j
            for p in range(excl_indptr[r], excl_indptr[r + 1]):
                skip[excl_indices[p]] = False
        return out

else:  # pragma: no cover
    spmm_numba = spmm_numpy
    scatter_add_rows_numba = scatter_add_rows_numpy
    topk_numba = topk_numpy
    adam_update_numba = adam_update_numpy


if USE_NUMBA:
    spmm = spmm_numba
    scatter_add_rows = scatter_add_rows_numba
    topk = topk_numba
    adam_update = adam_update_numba
else:
    spmm = spmm_numpy
    scatter_add_rows = scatter_add_rows_numpy
    topk = topk_numpy
    adam_update = adam_update_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
