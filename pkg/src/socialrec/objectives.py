"""Ranking and contrastive losses built on the tape."""
from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from .autodiff import Tape
from .errors import ShapeError

log = logging.getLogger(__name__)


def info_nce(tape: Tape, view_a: int, view_b: int, tau: float) -> int:
    """Summed InfoNCE over rows: row i of each view is the positive pair.

    Similarity is cosine divided by ``tau``; the other rows of ``view_b`` are
    the negatives. Zero-norm rows get cosine 0 against everything.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if tape.shape(view_a) != tape.shape(view_b):
        raise ShapeError(f"views differ in shape: {tape.shape(view_a)} vs {tape.shape(view_b)}")
    for v in (view_a, view_b):
        zero = np.flatnonzero(~np.any(tape.value(v) != 0.0, axis=1))
        if zero.size:
            log.warning("info_nce: %d zero-norm rows, cosine set to 0", zero.size)
    b = tape.shape(view_a)[0]
    sim = tape.scale(tape.cosine_matrix(view_a, view_b), 1.0 / tau)
    # cos <= 1, so shifting by 1/tau keeps every exponent <= 0
    shifted = tape.add(sim, tape.const(-1.0 / tau))
    log_norm = tape.log(tape.sum_rows(tape.exp(shifted)))
    positive = tape.sum_rows(tape.mask_mul(shifted, np.eye(b)))
    return tape.sum_all(tape.sub(log_norm, positive))


def bpr_loss(
    tape: Tape, pos_scores: int, neg_scores: int, reg_terms: Sequence[int], reg: float
) -> int:
    """``-sum log sigmoid(pos - neg) + reg * sum ||E||^2`` over ``reg_terms``."""
    if tape.shape(pos_scores) != tape.shape(neg_scores):
        raise ShapeError("positive and negative score vectors differ in shape")
    ranking = tape.scale(tape.sum_all(tape.log_sigmoid(tape.sub(pos_scores, neg_scores))), -1.0)
    if reg == 0.0 or not reg_terms:
        return ranking
    penalty = tape.add_n([tape.sumsq(t) for t in reg_terms])
    return tape.add(ranking, tape.scale(penalty, reg))


def total_loss(tape: Tape, bpr: int, cl: int, alpha: float) -> int:
    return tape.add(bpr, tape.scale(cl, alpha))
