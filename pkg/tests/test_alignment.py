import math

import numpy as np
import pytest

from socialrec.alignment import (
    InterestBundle,
    coattention_weights,
    gate_weights,
    gated_fusion,
    isolate_interests,
    predict_scores,
    score_block,
    user_features,
)
from socialrec.autodiff import Tape


def weights(e, s, p_b, p_s):
    t = Tape()
    wb, ws = coattention_weights(t, t.const(e), t.const(s), t.const(p_b), t.const(p_s))
    return t.value(wb), t.value(ws)


def test_zero_matrix_gives_uniform():
    rng = np.random.default_rng(0)
    wb, _ = weights(rng.standard_normal((3, 4)), rng.standard_normal((3, 4)), np.zeros((4, 4)), np.eye(4))
    np.testing.assert_allclose(wb, 0.25, atol=1e-15)


def test_saturation():
    # the softmax stage saturates on a large [t, -t] ...
    t = Tape()
    out = t.value(t.softmax_rows(t.const([[400.0, -400.0]])))
    np.testing.assert_allclose(out, [[1.0, 0.0]], atol=1e-12)
    # ... while tanh caps the co-attention logits at +-1
    wb, _ = weights(np.array([[1.0, 1.0]]), np.array([[1.0, 1.0]]), np.diag([400.0, -400.0]), np.eye(2))
    np.testing.assert_allclose(wb, [[math.e / (math.e + 1 / math.e), (1 / math.e) / (math.e + 1 / math.e)]])


def test_hand_evaluation():
    wb, _ = weights(np.array([[1.0, 1.0]]), np.array([[1.0, 0.0]]), np.eye(2), np.eye(2))
    t1 = math.tanh(1.0)
    expected = [math.exp(t1) / (math.exp(t1) + 1), 1 / (math.exp(t1) + 1)]
    np.testing.assert_allclose(wb[0], expected, atol=1e-15)
    np.testing.assert_allclose(wb[0], [0.6818, 0.3182], atol=2e-4)


def test_social_side_uses_behavior_projection():
    e, s = np.array([[1.0, 2.0]]), np.array([[0.5, -1.0]])
    p_s = np.array([[0.3, -0.2], [0.1, 0.4]])
    _, ws = weights(e, s, np.eye(2), p_s)
    z = np.tanh((e @ p_s) * s)
    np.testing.assert_allclose(ws, np.exp(z) / np.exp(z).sum(), atol=1e-15)


def split(e, w, gamma):
    t = Tape()
    a, s = isolate_interests(t, t.const(e), t.const(w), gamma)
    return t.value(a), t.value(s)


def test_isolation_examples():
    e = np.array([[2.0, -3.0]])
    a, s = split(e, np.array([[0.5, 0.5]]), 0.5)
    np.testing.assert_array_equal(a, e)
    np.testing.assert_array_equal(s, 0 * e)
    a, s = split(e, np.array([[0.5, 0.5]]), math.inf)
    np.testing.assert_array_equal(a, 0 * e)
    np.testing.assert_array_equal(s, e)
    a, s = split(e, np.array([[0.7, 0.3]]), 0.5)
    np.testing.assert_array_equal(a, [[2.0, 0.0]])
    np.testing.assert_array_equal(s, [[0.0, -3.0]])


@pytest.mark.parametrize("seed", range(10))
def test_partition_is_exact(seed):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal((7, 5))
    w = rng.dirichlet(np.ones(5), size=7)
    a, s = split(e, w, 0.2)
    assert np.array_equal(a + s, e)


def test_user_features():
    f = np.column_stack([np.log1p([0.0, math.e - 1]), np.log1p([0.0, math.e**2 - 1])])
    np.testing.assert_allclose(f[1], [1.0, 2.0])
    rng = np.random.default_rng(0)
    out = user_features(rng.integers(0, 50, 30), rng.integers(0, 10, 30))
    np.testing.assert_allclose(out.mean(axis=0), 0, atol=1e-10)
    np.testing.assert_allclose(out.var(axis=0), 1, atol=1e-10)
    flat = user_features([1, 2, 3], [0, 0, 0])
    assert np.all(flat[:, 1] == 0)


def fusion(components, gate):
    t = Tape()
    bundle = InterestBundle(*[t.const(c) for c in components])
    return t.value(gated_fusion(t, bundle, t.const(gate)))


def test_one_hot_gate_routes_identity():
    rng = np.random.default_rng(1)
    comps = [rng.standard_normal((3, 4)) for _ in range(6)]
    gate = np.zeros((3, 6))
    gate[:, 0] = 1.0
    np.testing.assert_array_equal(fusion(comps, gate), comps[0])


def test_uniform_gate_is_mean_of_towers():
    rng = np.random.default_rng(2)
    e, s = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
    mask_e, mask_s = rng.random((3, 4)) < 0.5, rng.random((3, 4)) < 0.5
    comps = [e, e * mask_e, e * ~mask_e, s, s * mask_s, s * ~mask_s]
    t = Tape()
    zero = [t.const(np.zeros(shape)) for shape in [(2, 5), (1, 5), (5, 6), (1, 6)]]
    gate = gate_weights(t, t.const(rng.standard_normal((3, 2))), *zero)
    np.testing.assert_allclose(t.value(gate), 1 / 6, atol=1e-15)
    np.testing.assert_allclose(fusion(comps, t.value(gate)), (2 * e + 2 * s) / 6, atol=1e-14)


def test_gate_rows_sum_to_one():
    rng = np.random.default_rng(3)
    t = Tape()
    params = [t.const(rng.standard_normal(s)) for s in [(2, 16), (1, 16), (16, 6), (1, 6)]]
    g = t.value(gate_weights(t, t.const(rng.standard_normal((20, 2))), *params))
    np.testing.assert_allclose(g.sum(axis=1), 1.0, atol=1e-12)


def test_predict_scores():
    t = Tape()
    u, v = t.const([[1.0, 2.0], [0.0, 1.0]]), t.const([[3.0, 4.0], [1.0, 0.0]])
    out = t.value(predict_scores(t, u, v, [0, 1], [0, 1]))
    np.testing.assert_array_equal(out, [[11.0], [0.0]])
    with pytest.raises(IndexError):
        predict_scores(t, u, v, [0], [5])


def test_block_scores_equal_pairs_exactly():
    rng = np.random.default_rng(4)
    # dyadic values keep both summation orders exact
    u = rng.integers(-8, 8, (4, 3)) / 4.0
    v = rng.integers(-8, 8, (5, 3)) / 4.0
    block = score_block(u, v, np.arange(4))
    uu, ii = np.meshgrid(np.arange(4), np.arange(5), indexing="ij")
    t = Tape()
    pairs = t.value(predict_scores(t, t.const(u), t.const(v), uu.ravel(), ii.ravel())).reshape(4, 5)
    assert np.array_equal(block, pairs)


@pytest.mark.parametrize("seed", range(10))
def test_block_scores_match_pairs_random(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 11))
    u, v = rng.standard_normal((m, 8)), rng.standard_normal((12, 8))
    block = score_block(u, v, np.arange(m))
    uu, ii = np.meshgrid(np.arange(m), np.arange(12), indexing="ij")
    t = Tape()
    pairs = t.value(predict_scores(t, t.const(u), t.const(v), uu.ravel(), ii.ravel())).reshape(m, 12)
    np.testing.assert_allclose(block, pairs, rtol=0, atol=1e-10)
