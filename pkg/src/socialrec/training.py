"""BPR triple sampling, Adam, the epoch loop and validation early stopping."""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import _accel
from .alignment import predict_scores
from .autodiff import Tape, backward
from .checkpoint import Checkpoint
from .config import RunConfig
from .data import Dataset
from .errors import DataError, NumericalError
from .graph import SparseMatrix
from .metrics import MetricsReport, cold_user_slice, evaluate_rankings
from .model import PARAM_NAMES, Graphs, build_graphs, final_embeddings, forward, init_params
from .objectives import bpr_loss, info_nce, total_loss
from .svd import SvdFactors

log = logging.getLogger(__name__)


class TripleSampler:
    """Uniform (user, positive, negative) sampling from a binary user x item matrix."""

    def __init__(self, train: SparseMatrix):
        self.train = train
        self.n_items = train.shape[1]
        deg = train.row_degrees()
        full = np.flatnonzero(deg >= self.n_items)
        if full.size:
            log.warning("excluding %d users who interacted with every item from sampling", full.size)
        self.users = np.flatnonzero((deg > 0) & (deg < self.n_items))
        if self.users.size == 0:
            raise DataError("no user has a usable training interaction")
        self.deg = deg
        self.codes = train.row_ids() * self.n_items + train.indices  # sorted by construction

    def _known(self, users, items):
        codes = users * self.n_items + items
        pos = np.searchsorted(self.codes, codes)
        pos = np.minimum(pos, self.codes.size - 1)
        return self.codes[pos] == codes

    def sample(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        users = self.users[rng.integers(self.users.size, size=batch_size)]
        offsets = rng.integers(0, self.deg[users])
        positives = self.train.indices[self.train.indptr[users] + offsets]
        negatives = rng.integers(self.n_items, size=batch_size)
        bad = self._known(users, negatives)
        while bad.any():
            negatives[bad] = rng.integers(self.n_items, size=int(bad.sum()))
            bad[bad] = self._known(users[bad], negatives[bad])
        return np.column_stack([users, positives, negatives])


def sample_bpr_triples(train: SparseMatrix, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """``(batch_size, 3)`` array of (user, positive item, negative item)."""
    return TripleSampler(train).sample(batch_size, rng)


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """In-place bias-corrected update; aborts before touching anything on NaN/Inf."""
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite gradient for {name} at step {self.t + 1}")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            _accel.adam_update(params[name], np.ascontiguousarray(g), m, v,
                               self.lr, self.beta1, self.beta2, self.eps, c1, c2)


def build_step_loss(tape: Tape, nodes: dict[str, int], graphs: Graphs, cfg: RunConfig, triples: np.ndarray):
    """Returns ``(loss, bpr, cl)`` node ids; ``cl`` is None for non-social models.

    With ``alpha == 0`` the contrastive node is still built (for logging) but is
    not connected to ``loss``.
    """
    users, pos, neg = triples[:, 0], triples[:, 1], triples[:, 2]
    fw = forward(tape, nodes, graphs, cfg)
    pos_s = predict_scores(tape, fw.user_final, fw.item_final, users, pos)
    neg_s = predict_scores(tape, fw.user_final, fw.item_final, users, neg)
    if cfg.reg_batch_rows:
        reg_terms = [
            tape.gather_rows(nodes["user_emb"], np.unique(users)),
            tape.gather_rows(nodes["item_emb"], np.unique(np.concatenate([pos, neg]))),
        ]
    else:
        reg_terms = [nodes["user_emb"], nodes["item_emb"]]
    bpr = bpr_loss(tape, pos_s, neg_s, reg_terms, cfg.reg)
    if fw.social is None:
        return bpr, bpr, None
    cl_users = np.arange(graphs.adj.shape[0]) if cfg.cl_full_batch else np.unique(users)
    cl = info_nce(
        tape, tape.gather_rows(fw.social, cl_users), tape.gather_rows(fw.reconstructed, cl_users), cfg.tau
    )
    loss = total_loss(tape, bpr, cl, cfg.alpha) if cfg.alpha > 0 else bpr
    return loss, bpr, cl


@dataclass
class EpochStats:
    loss_bpr: float
    loss_cl: float
    steps: int


class Trainer:
    """Holds parameters, graphs and optimizer state for one run."""

    def __init__(self, dataset: Dataset, cfg: RunConfig, factors: SvdFactors | None = None):
        self.dataset = dataset
        self.cfg = cfg.resolved()
        self.rng = np.random.default_rng(self.cfg.seed)
        self.params = init_params(self.cfg, dataset.n_users, dataset.n_items, self.rng)
        self.graphs = build_graphs(dataset, self.cfg, self.rng, factors)
        self.optimizer = Adam(self.cfg.lr)
        self.sampler = TripleSampler(dataset.interaction_matrix("train"))

    def steps_per_epoch(self) -> int:
        return math.ceil(len(self.dataset.train) / self.cfg.batch_size)

    def train_step(self, triples: np.ndarray) -> tuple[float, float]:
        tape = Tape()
        nodes = {k: tape.param(v) for k, v in self.params.items()}
        loss, bpr, cl = build_step_loss(tape, nodes, self.graphs, self.cfg, triples)
        grads = backward(tape, loss)
        self.optimizer.step(self.params, {name: grads[i] for name, i in nodes.items() if i in grads})
        return float(tape.value(bpr)[0, 0]), float(tape.value(cl)[0, 0]) if cl is not None else 0.0

    def train_epoch(self) -> EpochStats:
        n = self.steps_per_epoch()
        bprs, cls = [], []
        for _ in range(n):
            b, c = self.train_step(self.sampler.sample(self.cfg.batch_size, self.rng))
            bprs.append(b)
            cls.append(c)
        for name, p in self.params.items():
            if not np.all(np.isfinite(p)):
                raise NumericalError(f"parameter {name} became non-finite")
        return EpochStats(float(np.mean(bprs)), float(np.mean(cls)), n)

    def evaluate(self, split: str, ks=None) -> MetricsReport:
        return evaluate_params(self.params, self.graphs, self.dataset, self.cfg, split, ks)


def evaluate_params(
    params: dict[str, np.ndarray],
    graphs: Graphs,
    ds: Dataset,
    cfg: RunConfig,
    split: str,
    ks=None,
    cold_threshold: int | None = None,
) -> MetricsReport:
    """Rank all items per user with training items excluded, for either split."""
    user_final, item_final = final_embeddings(params, graphs, cfg)
    threshold = cfg.cold_threshold if cold_threshold is None else cold_threshold
    return evaluate_rankings(
        user_final,
        item_final,
        ds.interaction_matrix(split),
        ds.interaction_matrix("train"),
        ks or cfg.ks,
        cold_user_slice(ds.train_degree(), threshold),
        split=split,
    )


def fit(dataset: Dataset, cfg: RunConfig) -> Checkpoint:
    """Train with early stopping on validation Recall@20; returns the best checkpoint."""
    trainer = Trainer(dataset, cfg)
    cfg = trainer.cfg
    best_val, best_epoch, best_params = -1.0, 0, copy.deepcopy(trainer.params)
    history, stale = [], 0
    for epoch in range(1, cfg.epochs + 1):
        stats = trainer.train_epoch()
        if epoch % cfg.eval_every and epoch != cfg.epochs:
            continue
        val = trainer.evaluate("val", (20,)).get("recall", 20)
        log.info("epoch=%d loss_bpr=%.6f loss_cl=%.6f val_recall20=%.6f", epoch, stats.loss_bpr, stats.loss_cl, val)
        history.append({"epoch": epoch, "loss_bpr": stats.loss_bpr, "loss_cl": stats.loss_cl, "val_recall20": val})
        if val > best_val:
            best_val, best_epoch, best_params, stale = val, epoch, copy.deepcopy(trainer.params), 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return make_checkpoint(best_params, trainer.graphs, dataset, cfg, best_epoch, best_val, history)


def make_checkpoint(params, graphs: Graphs, dataset: Dataset, cfg: RunConfig, best_epoch, best_val, history) -> Checkpoint:
    arrays = {k: params[k] for k in PARAM_NAMES if k in params}
    if graphs.factors is not None:
        arrays["svd_u"] = graphs.factors.u
        arrays["svd_s"] = graphs.factors.s
        arrays["svd_v"] = graphs.factors.v
    meta = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "best_epoch": best_epoch,
        "best_val_recall20": best_val,
        "history": history,
        "fingerprint": dataset.fingerprint,
        "n_users": dataset.n_users,
        "n_items": dataset.n_items,
    }
    return Checkpoint(arrays, meta)


def restore(ckpt: Checkpoint, dataset: Dataset, check_fingerprint: bool = True):
    """Rebuild ``(params, graphs, cfg)`` from a checkpoint without refactorizing."""
    if check_fingerprint and ckpt.metadata.get("fingerprint") != dataset.fingerprint:
        raise DataError("dataset fingerprint does not match the checkpoint")
    cfg = RunConfig.from_dict(ckpt.metadata["config"]).resolved()
    params = {k: ckpt.arrays[k] for k in PARAM_NAMES if k in ckpt.arrays}
    factors = None
    if "svd_u" in ckpt.arrays:
        factors = SvdFactors(ckpt.arrays["svd_u"], ckpt.arrays["svd_s"], ckpt.arrays["svd_v"])
    return params, build_graphs(dataset, cfg, factors=factors), cfg
