import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socialrec.autodiff import Tape, backward, grad_check
from socialrec.objectives import bpr_loss, info_nce, total_loss


def nce_value(a, b, tau):
    t = Tape()
    return t.value(info_nce(t, t.const(a), t.const(b), tau))[0, 0]


def nce_oracle(a, b, tau):
    """Direct transcription with explicit loops."""
    total = 0.0
    for i in range(len(a)):
        sims = [
            float(a[i] @ b[j]) / (np.linalg.norm(a[i]) * np.linalg.norm(b[j])) / tau for j in range(len(b))
        ]
        total += -math.log(math.exp(sims[i]) / sum(math.exp(s) for s in sims))
    return total


def test_single_pair_is_zero():
    assert nce_value(np.array([[0.3, -1.0]]), np.array([[2.0, 0.5]]), 0.2) == pytest.approx(0.0, abs=1e-12)


def test_identical_rows_give_b_log_b():
    x = np.tile([[0.5, 1.0, -2.0]], (4, 1))
    assert nce_value(x, x, 0.2) == pytest.approx(4 * math.log(4), abs=1e-12)


def test_orthogonal_views():
    e = np.eye(2)
    # per user -log(e / (e + 1))
    assert nce_value(e, e, 1.0) == pytest.approx(2 * math.log1p(math.exp(-1.0)), abs=1e-12)
    assert nce_value(e, e, 1.0) == pytest.approx(0.6266, abs=1e-4)


@pytest.mark.parametrize("seed", range(5))
def test_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((5, 3)), rng.standard_normal((5, 3))
    assert nce_value(a, b, 0.3) == pytest.approx(nce_oracle(a, b, 0.3), rel=1e-12)


def test_zero_norm_row_is_finite():
    a = np.array([[0.0, 0.0], [1.0, 2.0]])
    assert np.isfinite(nce_value(a, a, 0.2))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 2.0))
def test_non_negative_and_scale_invariant(seed, tau):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((6, 4)), rng.standard_normal((6, 4))
    base = nce_value(a, b, tau)
    assert base >= 0
    ra, rb = rng.uniform(0.1, 10, (6, 1)), rng.uniform(0.1, 10, (6, 1))
    assert nce_value(a * ra, b * rb, tau) == pytest.approx(base, abs=1e-10)


def test_info_nce_gradients():
    rng = np.random.default_rng(1)
    err = grad_check(
        lambda t, p: info_nce(t, p[0], p[1], 0.2),
        [rng.uniform(-1, 1, (5, 3)), rng.uniform(-1, 1, (5, 3))],
    )
    assert err < 1e-4


def bpr_value(pos, neg, emb=(), reg=0.0):
    t = Tape()
    terms = [t.const(e) for e in emb]
    return t.value(bpr_loss(t, t.const(np.reshape(pos, (-1, 1))), t.const(np.reshape(neg, (-1, 1))), terms, reg))[0, 0]


def test_bpr_examples():
    assert bpr_value([0.4], [0.4]) == pytest.approx(math.log(2), abs=1e-15)
    assert bpr_value([20.0], [0.0]) < 1e-8
    assert bpr_value([0.0], [0.0], [np.array([[2.0]]), np.zeros((1, 1))], 0.1) == pytest.approx(
        math.log(2) + 0.4, abs=1e-12
    )


def test_bpr_strictly_decreasing_in_margin():
    margins = np.linspace(-10, 10, 81)
    values = [bpr_value([m], [0.0]) for m in margins]
    assert all(b < a for a, b in zip(values, values[1:]))


def test_total_loss():
    t = Tape()
    bpr, cl = t.const([[1.0]]), t.const([[2.0]])
    assert t.value(total_loss(t, bpr, cl, 0.5))[0, 0] == 2.0
    assert t.value(total_loss(t, bpr, cl, 0.0))[0, 0] == 1.0


def test_total_gradient_is_sum_of_parts():
    rng = np.random.default_rng(2)
    x0 = rng.uniform(-1, 1, (4, 3))
    y = rng.standard_normal((4, 3))

    def parts(t, x):
        pos = t.sum_rows(t.mul(x, t.const(y)))
        neg = t.sum_rows(t.mul(t.gather_rows(x, [1, 2, 3, 0]), t.const(y)))
        return bpr_loss(t, pos, neg, [x], 0.01), info_nce(t, x, t.const(y), 0.5)

    def grad_of(which):
        t = Tape()
        x = t.param(x0)
        bpr, cl = parts(t, x)
        node = {"bpr": bpr, "cl": cl, "total": total_loss(t, bpr, cl, 0.3)}[which]
        return backward(t, node)[x]

    np.testing.assert_allclose(grad_of("total"), grad_of("bpr") + 0.3 * grad_of("cl"), atol=1e-12)
    assert grad_check(lambda t, p: total_loss(t, *parts(t, p[0]), 0.3), [x0]) < 1e-4
