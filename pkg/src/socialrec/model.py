"""Parameter initialization and the shared forward pass for all model variants.

``bpr`` and ``lightgcn`` are degenerate configurations of the same pipeline:
``bpr`` has no propagation layers, and neither uses the social towers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .alignment import N_COMPONENTS, build_bundle, gate_weights, gated_fusion, user_features
from .autodiff import Tape
from .config import RunConfig
from .data import Dataset
from .graph import SparseMatrix, normalize_bipartite, normalize_social, propagate_interaction, propagate_social
from .svd import SvdFactors, propagate_reconstructed, truncated_svd

PARAM_NAMES = ("user_emb", "item_emb", "p_b", "p_s", "gate_w1", "gate_b1", "gate_w2", "gate_b2")


def init_params(cfg: RunConfig, n_users: int, n_items: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Embeddings first so every variant shares them for a given seed."""
    d, h = cfg.dim, cfg.gate_hidden
    params = {
        "user_emb": rng.normal(0.0, cfg.init_std, (n_users, d)),
        "item_emb": rng.normal(0.0, cfg.init_std, (n_items, d)),
    }
    if cfg.uses_social:
        params["p_b"] = rng.normal(0.0, 1.0 / np.sqrt(d), (d, d))
        params["p_s"] = rng.normal(0.0, 1.0 / np.sqrt(d), (d, d))
        params["gate_w1"] = rng.normal(0.0, 0.1, (2, h))
        params["gate_b1"] = np.zeros((1, h))
        params["gate_w2"] = rng.normal(0.0, 0.1, (h, N_COMPONENTS))
        params["gate_b2"] = np.zeros((1, N_COMPONENTS))
    return params


@dataclass(frozen=True, eq=False)
class Graphs:
    adj: SparseMatrix
    social: SparseMatrix | None
    factors: SvdFactors | None
    features: np.ndarray | None


def build_graphs(
    ds: Dataset, cfg: RunConfig, rng: np.random.Generator | None = None, factors: SvdFactors | None = None
) -> Graphs:
    """Normalized adjacencies from the training split.

    The SVD is computed only when ``factors`` is not supplied (checkpoints
    carry their own).
    """
    raw = ds.interaction_matrix("train")
    adj, _ = normalize_bipartite(raw)
    if not cfg.uses_social:
        return Graphs(adj, None, None, None)
    social = normalize_social(ds.social_matrix())
    if factors is None:
        rank = min(cfg.svd_rank, *adj.shape)
        factors = truncated_svd(
            raw if cfg.svd_on_raw else adj, rank, cfg.svd_oversampling, cfg.svd_power_iters, rng
        )
    features = user_features(ds.train_degree(), ds.social_degree())
    return Graphs(adj, social, factors, features)


@dataclass
class Forward:
    user_final: int
    item_final: int
    behavior: int
    social: int | None = None
    reconstructed: int | None = None
    gate: int | None = None
    w_b: int | None = None
    w_s: int | None = None


def forward(tape: Tape, nodes: dict[str, int], graphs: Graphs, cfg: RunConfig) -> Forward:
    behavior, items = propagate_interaction(tape, graphs.adj, nodes["user_emb"], nodes["item_emb"], cfg.layers)
    if not cfg.uses_social:
        return Forward(behavior, items, behavior)
    social = propagate_social(tape, graphs.social, nodes["user_emb"], cfg.layers)
    recon = propagate_reconstructed(tape, graphs.factors, nodes["user_emb"], cfg.layers)
    if not cfg.uses_alignment:
        fused = tape.scale(tape.add(behavior, social), 0.5)
        return Forward(fused, items, behavior, social, recon)
    bundle, w_b, w_s = build_bundle(
        tape, behavior, social, nodes["p_b"], nodes["p_s"], cfg.gamma_behavior, cfg.gamma_social
    )
    gate = gate_weights(
        tape, tape.const(graphs.features), nodes["gate_w1"], nodes["gate_b1"], nodes["gate_w2"], nodes["gate_b2"]
    )
    return Forward(gated_fusion(tape, bundle, gate), items, behavior, social, recon, gate, w_b, w_s)


def final_embeddings(params: dict[str, np.ndarray], graphs: Graphs, cfg: RunConfig) -> tuple[np.ndarray, np.ndarray]:
    """Fused user and propagated item embeddings, without gradient tracking."""
    tape = Tape()
    nodes = {k: tape.const(v) for k, v in params.items()}
    fw = forward(tape, nodes, graphs, cfg)
    return tape.value(fw.user_final), tape.value(fw.item_final)
