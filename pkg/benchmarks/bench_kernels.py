"""Time the numba kernels against their numpy fallbacks at LastFM-like scale.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both variants are checked for agreement before timing. Numba compile time is
excluded by a warm-up call.
"""
import argparse
import timeit

import numpy as np

from socialrec import _accel
from socialrec.graph import SparseMatrix


def _problems(rng):
    m, n, d, nnz = 1892, 17632, 64, 67000
    rows = rng.integers(0, m, nnz)
    cols = rng.integers(0, n, nnz)
    a = SparseMatrix.from_coo(rows, cols, 1.0, (m, n))
    x = rng.standard_normal((n, d))
    idx = rng.integers(0, n, 4096)
    vals = rng.standard_normal((4096, d))
    scores = rng.standard_normal((512, n))
    excl = SparseMatrix.from_coo(rng.integers(0, 512, 20000), rng.integers(0, n, 20000), 1.0, (512, n))
    p, g = rng.standard_normal((n, d)), rng.standard_normal((n, d))
    return {
        "spmm (1892x17632, nnz 67k, d=64)": (
            lambda f: f(a.indptr, a.indices, a.data, x), _accel.spmm_numpy, _accel.spmm_numba),
        "spmm transpose": (
            lambda f: f(a.T.indptr, a.T.indices, a.T.data, x[:m]), _accel.spmm_numpy, _accel.spmm_numba),
        "scatter_add_rows (4096 rows into 17632)": (
            lambda f: f(idx, vals, n), _accel.scatter_add_rows_numpy, _accel.scatter_add_rows_numba),
        "topk (512 users x 17632 items, k=20)": (
            lambda f: f(scores, excl.indptr, excl.indices, 20), _accel.topk_numpy, _accel.topk_numba),
        "adam_update (17632 x 64)": (
            lambda f: f(p.copy(), g, np.zeros_like(p), np.zeros_like(p), 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001),
            _accel.adam_update_numpy, _accel.adam_update_numba),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if not _accel.HAS_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<42}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, (call, f_np, f_nb) in _problems(rng).items():
        a, b = call(f_np), call(f_nb)
        if a is not None and not np.allclose(a, b, rtol=1e-12, atol=1e-12):
            raise SystemExit(f"{name}: backends disagree")
        t_np = min(timeit.repeat(lambda: call(f_np), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: call(f_nb), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<42}{t_np:>10.2f}{t_nb:>10.2f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
