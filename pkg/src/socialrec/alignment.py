"""Co-attention interest isolation and gated routing of user representations.

Each user gets two d-dimensional affinity vectors::

    w_b[i] = softmax(tanh((s_i @ P_b) * e_i))
    w_s[i] = softmax(tanh((e_i @ P_s) * s_i))

where ``e_i`` is the behavior embedding and ``s_i`` the social embedding.
Coordinates whose affinity reaches the threshold form the aligned part, the
rest the specific part. A per-user softmax gate then mixes the six
representations (full, aligned, specific for both towers).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape
from .errors import ShapeError

N_COMPONENTS = 6


@dataclass(frozen=True)
class InterestBundle:
    behavior: int
    behavior_aligned: int
    behavior_specific: int
    social: int
    social_aligned: int
    social_specific: int

    def components(self) -> tuple[int, ...]:
        return (
            self.behavior,
            self.behavior_aligned,
            self.behavior_specific,
            self.social,
            self.social_aligned,
            self.social_specific,
        )


def coattention_weights(
    tape: Tape, behavior: int, social: int, p_b: int, p_s: int
) -> tuple[int, int]:
    m, d = tape.shape(behavior)
    if tape.shape(social) != (m, d):
        raise ShapeError(f"tower shapes differ: {(m, d)} vs {tape.shape(social)}")
    for p in (p_b, p_s):
        if tape.shape(p) != (d, d):
            raise ShapeError(f"attention matrix must be {d}x{d}, got {tape.shape(p)}")
    w_b = tape.softmax_rows(tape.tanh(tape.mul(tape.matmul(social, p_b), behavior)))
    w_s = tape.softmax_rows(tape.tanh(tape.mul(tape.matmul(behavior, p_s), social)))
    return w_b, w_s


def isolate_interests(tape: Tape, emb: int, weights: int, gamma: float) -> tuple[int, int]:
    """Split ``emb`` into (aligned, specific) by ``weights >= gamma``.

    The comparison is a constant of the tape: no gradient reaches ``weights``
    through this split.
    """
    mask = tape.value(weights) >= gamma
    return tape.mask_mul(emb, mask), tape.mask_mul(emb, ~mask)


def build_bundle(
    tape: Tape, behavior: int, social: int, p_b: int, p_s: int, gamma_b: float, gamma_s: float
) -> tuple[InterestBundle, int, int]:
    w_b, w_s = coattention_weights(tape, behavior, social, p_b, p_s)
    b_al, b_sp = isolate_interests(tape, behavior, w_b, gamma_b)
    s_al, s_sp = isolate_interests(tape, social, w_s, gamma_s)
    return InterestBundle(behavior, b_al, b_sp, social, s_al, s_sp), w_b, w_s


def user_features(interaction_degree, social_degree) -> np.ndarray:
    """Standardized ``[log1p(interactions), log1p(friends)]`` per user.

    A column with zero variance is only centered.
    """
    raw = np.column_stack(
        [np.log1p(np.asarray(interaction_degree, float)), np.log1p(np.asarray(social_degree, float))]
    )
    std = raw.std(axis=0)
    return (raw - raw.mean(axis=0)) / np.where(std > 0, std, 1.0)


def gate_weights(tape: Tape, features: int, w1: int, b1: int, w2: int, b2: int) -> int:
    """Two-layer tanh MLP followed by a row softmax over the six components."""
    hidden = tape.tanh(tape.add(tape.matmul(features, w1), b1))
    return tape.softmax_rows(tape.add(tape.matmul(hidden, w2), b2))


def gated_fusion(tape: Tape, bundle: InterestBundle, gate: int) -> int:
    comps = bundle.components()
    if tape.shape(gate)[1] != len(comps):
        raise ShapeError(f"gate must have {len(comps)} columns, got {tape.shape(gate)}")
    terms = []
    for c, node in enumerate(comps):
        pick = np.zeros((len(comps), 1))
        pick[c, 0] = 1.0
        terms.append(tape.mul(tape.matmul(gate, tape.const(pick)), node))
    return tape.add_n(terms)


def predict_scores(tape: Tape, user_final: int, item_final: int, users, items) -> int:
    """Per-pair dot products as a ``B x 1`` column."""
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    if users.shape != items.shape:
        raise ShapeError("user and item index lists differ in length")
    u = tape.gather_rows(user_final, users)
    v = tape.gather_rows(item_final, items)
    return tape.sum_rows(tape.mul(u, v))


def score_block(user_final: np.ndarray, item_final: np.ndarray, users) -> np.ndarray:
    """Dense score rows for a block of users (evaluation path)."""
    return user_final[np.asarray(users, dtype=np.int64)] @ item_final.T
