import math

import numpy as np
import pytest

from socialrec.autodiff import Tape, grad_check
from socialrec.graph import SparseMatrix
from socialrec.svd import SvdFactors, propagate_reconstructed, truncated_svd


def best_rank_error(a, k):
    s = np.linalg.svd(a, compute_uv=False)
    return math.sqrt(float(np.sum(s[k:] ** 2)))


def test_identity():
    f = truncated_svd(SparseMatrix.from_dense(np.eye(3)), 3, rng=0)
    np.testing.assert_allclose(f.s, [1, 1, 1], atol=1e-12)
    np.testing.assert_allclose(f.reconstruct(), np.eye(3), atol=1e-10)


def test_rank_one_by_hand():
    f = truncated_svd(np.ones((2, 2)), 1, rng=0)
    assert f.s[0] == pytest.approx(2.0, abs=1e-12)
    np.testing.assert_allclose(np.abs(f.u[:, 0]), [1 / math.sqrt(2)] * 2, atol=1e-12)


@pytest.mark.parametrize("k", [1, 2])
def test_diag_dominant_pair(k):
    f = truncated_svd(SparseMatrix.from_dense(np.diag([3.0, 1.0])), k, rng=7)
    np.testing.assert_allclose(f.s, [3.0, 1.0][:k], rtol=0, atol=1e-8)
    if k == 1:
        np.testing.assert_allclose(f.reconstruct(), np.diag([3.0, 0.0]), atol=1e-10)


def test_rank_out_of_range():
    with pytest.raises(ValueError):
        truncated_svd(np.ones((3, 4)), 4)
    with pytest.raises(ValueError):
        truncated_svd(np.ones((3, 4)), 0)


@pytest.mark.parametrize("seed", range(5))
def test_near_optimal_error_and_orthonormal(seed):
    rng = np.random.default_rng(seed)
    a = (rng.random((40, 60)) < 0.15) * 1.0
    a[np.arange(40), rng.integers(0, 60, 40)] = 1.0
    for k in (1, 3, 5, 8):
        f = truncated_svd(SparseMatrix.from_dense(a), k, 10, 4, rng=seed)
        err = np.linalg.norm(a - f.reconstruct())
        assert err <= best_rank_error(a, k) * 1.05
        np.testing.assert_allclose(f.u.T @ f.u, np.eye(k), atol=1e-6)
        np.testing.assert_allclose(f.v.T @ f.v, np.eye(k), atol=1e-6)
        assert np.all(f.s >= 0) and np.all(np.diff(f.s) <= 0)


def test_error_non_increasing_in_k():
    rng = np.random.default_rng(42)
    a = rng.standard_normal((20, 30))
    errs = [np.linalg.norm(a - truncated_svd(a, k, rng=1).reconstruct()) for k in range(1, 6)]
    assert all(e2 <= e1 + 1e-12 for e1, e2 in zip(errs, errs[1:]))


def test_deterministic_given_seed():
    a = np.random.default_rng(0).standard_normal((15, 12))
    f1, f2 = truncated_svd(a, 3, rng=9), truncated_svd(a, 3, rng=9)
    assert np.array_equal(f1.u, f2.u) and np.array_equal(f1.s, f2.s)


def _orthonormal_factors(rng, m, k):
    q, _ = np.linalg.qr(rng.standard_normal((m, k)))
    return SvdFactors(q, rng.uniform(0.1, 1.0, k), np.zeros((1, k)))


def test_projector_fixes_its_range():
    rng = np.random.default_rng(3)
    q, _ = np.linalg.qr(rng.standard_normal((6, 2)))
    f = SvdFactors(q, np.ones(2), np.zeros((1, 2)))
    e0 = q @ rng.standard_normal((2, 3))
    t = Tape()
    out = propagate_reconstructed(t, f, t.const(e0), 1)
    np.testing.assert_allclose(t.value(out), e0, atol=1e-12)


def test_zero_layers():
    rng = np.random.default_rng(3)
    f = _orthonormal_factors(rng, 6, 2)
    t = Tape()
    e = t.const(rng.standard_normal((6, 3)))
    assert propagate_reconstructed(t, f, e, 0) == e


@pytest.mark.parametrize("case", range(10))
def test_factored_matches_dense(case):
    rng = np.random.default_rng(case)
    f = _orthonormal_factors(rng, 6, 2)
    a_s = f.u @ np.diag(f.s) @ f.u.T
    e0 = rng.standard_normal((6, 4))
    layers = [e0]
    for _ in range(3):
        layers.append(a_s @ layers[-1])
    t = Tape()
    out = propagate_reconstructed(t, f, t.const(e0), 3)
    np.testing.assert_allclose(t.value(out), sum(layers) / 4, rtol=0, atol=1e-10)


def test_implicit_view_is_symmetric():
    rng = np.random.default_rng(8)
    f = _orthonormal_factors(rng, 12, 4)
    x, y = rng.standard_normal((12, 1)), rng.standard_normal((12, 1))

    def apply(v):
        return f.u @ (f.s[:, None] * (f.u.T @ v))

    assert (apply(x).T @ y)[0, 0] == pytest.approx((x.T @ apply(y))[0, 0], abs=1e-10)


def test_gradient_through_reconstructed_view():
    rng = np.random.default_rng(4)
    f = _orthonormal_factors(rng, 6, 2)
    w = rng.standard_normal((6, 3))
    err = grad_check(
        lambda t, p: t.sum_all(t.mul(propagate_reconstructed(t, f, p[0], 2), t.const(w))),
        [rng.uniform(-1, 1, (6, 3))],
    )
    assert err < 1e-4
