"""Top-K ranking with exclusions and Precision/Recall/NDCG reporting."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .graph import SparseMatrix

log = logging.getLogger(__name__)

METRICS = ("precision", "recall", "ndcg")


def rank_topk(scores, exclude, k: int) -> np.ndarray:
    """Top ``k`` item ids for one score row, excluded ids removed, ties by id."""
    scores = np.asarray(scores, dtype=np.float64).reshape(1, -1)
    exclude = np.unique(np.asarray(exclude, dtype=np.int64))
    available = scores.shape[1] - exclude.size
    if k > available:
        log.warning("requested top-%d but only %d items are rankable", k, available)
    out = _accel.topk(scores, np.array([0, exclude.size], dtype=np.int64), exclude, k)[0]
    return out[out >= 0]


def metrics_at_k(topk, truth, k: int) -> tuple[float, float, float]:
    """(precision, recall, ndcg) of a ranked list against a non-empty truth set."""
    truth = set(int(t) for t in truth)
    if not truth:
        raise ValueError("ground truth must be non-empty")
    ranked = [int(i) for i in list(topk)[:k]]
    hit_ranks = [r for r, item in enumerate(ranked) if item in truth]
    dcg = sum(1.0 / np.log2(r + 2) for r in hit_ranks)
    idcg = sum(1.0 / np.log2(r + 2) for r in range(min(k, len(truth))))
    return len(hit_ranks) / k, len(hit_ranks) / len(truth), dcg / idcg


def cold_user_slice(train_degree, threshold: int = 20) -> np.ndarray:
    """Users with strictly fewer than ``threshold`` training interactions."""
    return np.flatnonzero(np.asarray(train_degree) < threshold)


@dataclass
class MetricsReport:
    ks: tuple[int, ...]
    overall: dict[str, dict[int, float]]
    cold: dict[str, dict[int, float]]
    n_users: int
    n_cold_users: int
    n_skipped: int
    split: str = "test"
    per_user: dict = field(default_factory=dict, repr=False)

    def get(self, metric: str, k: int, cold: bool = False) -> float:
        return (self.cold if cold else self.overall)[metric][k]

    def to_dict(self) -> dict:
        def fmt(block):
            return {m: {str(k): block[m][k] for k in self.ks} for m in METRICS}

        return {
            "split": self.split,
            "ks": list(self.ks),
            "users": self.n_users,
            "cold_users": self.n_cold_users,
            "skipped_users": self.n_skipped,
            "all": fmt(self.overall),
            "cold": fmt(self.cold),
        }

    def to_tsv(self) -> str:
        names = {"precision": "Precision", "recall": "Recall", "ndcg": "NDCG"}
        lines = ["metric\tK\tall_users\tcold_users"]
        for m in METRICS:
            for k in self.ks:
                lines.append(f"{names[m]}\t{k}\t{self.overall[m][k]:.4f}\t{self.cold[m][k]:.4f}")
        return "\n".join(lines) + "\n"


def _batch_metrics(topk: np.ndarray, truth: SparseMatrix, users: np.ndarray, k: int):
    """Vectorized per-user metrics for a block of ranked lists."""
    heads = topk[:, :k]
    hits = np.zeros(heads.shape, dtype=bool)
    for r, u in enumerate(users):
        hits[r] = np.isin(heads[r], truth.row(u))
    n_truth = truth.row_degrees()[users]
    discount = 1.0 / np.log2(np.arange(2, k + 2))
    ideal = np.cumsum(discount)[np.minimum(k, n_truth) - 1]
    n_hits = hits.sum(axis=1)
    return n_hits / k, n_hits / n_truth, (hits * discount).sum(axis=1) / ideal


def evaluate_rankings(
    user_final: np.ndarray,
    item_final: np.ndarray,
    truth: SparseMatrix,
    exclude: SparseMatrix,
    ks=(10, 20),
    cold_users=(),
    block_size: int = 512,
    split: str = "test",
) -> MetricsReport:
    """Score users block-wise, rank with exclusions, and average the metrics.

    Users with no ground truth are skipped and counted in ``n_skipped``.
    """
    ks = tuple(sorted(int(k) for k in ks))
    kmax = ks[-1]
    users = np.flatnonzero(truth.row_degrees() > 0)
    per_user = {m: {k: np.zeros(users.size) for k in ks} for m in METRICS}
    for start in range(0, users.size, block_size):
        block = users[start : start + block_size]
        scores = user_final[block] @ item_final.T
        counts = exclude.row_degrees()[block]
        indptr = np.zeros(block.size + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        indices = np.concatenate([exclude.row(u) for u in block]) if block.size else np.zeros(0, np.int64)
        top = _accel.topk(scores, indptr, indices.astype(np.int64), kmax)
        for k in ks:
            p, r, n = _batch_metrics(top, truth, block, k)
            sl = slice(start, start + block.size)
            per_user["precision"][k][sl] = p
            per_user["recall"][k][sl] = r
            per_user["ndcg"][k][sl] = n
    cold_mask = np.isin(users, np.asarray(cold_users, dtype=np.int64))

    def average(mask):
        return {
            m: {k: float(per_user[m][k][mask].mean()) if mask.any() else 0.0 for k in ks} for m in METRICS
        }

    return MetricsReport(
        ks=ks,
        overall=average(np.ones(users.size, dtype=bool)),
        cold=average(cold_mask),
        n_users=int(users.size),
        n_cold_users=int(cold_mask.sum()),
        n_skipped=int(truth.shape[0] - users.size),
        split=split,
        per_user={"users": users, **per_user},
    )
