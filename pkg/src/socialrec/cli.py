"""Command-line entry point: prepare-data, train, evaluate, recommend.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, parse_assignments
from .data import build_dataset, load_ciao, load_dataset, load_lastfm, save_dataset
from .errors import ConfigError, SocialRecError
from .metrics import rank_topk
from .model import final_embeddings
from .training import evaluate_params, fit, restore

log = logging.getLogger("socialrec")


def _parse_ks(text: str) -> tuple[int, ...]:
    try:
        ks = tuple(int(k) for k in text.split(",") if k.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid K list {text!r}") from None
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("K values must be positive")
    return ks


def cmd_prepare_data(args) -> int:
    if args.dataset == "lastfm":
        loaded = load_lastfm(args.input)
    else:
        loaded = load_ciao(args.input, args.positive_threshold)
    ds = build_dataset(loaded, seed=args.seed, name=args.dataset)
    summary_path = save_dataset(ds, args.output)
    print(json.dumps(ds.summary(), indent=2))
    log.info("wrote %s and %s", args.output, summary_path)
    return 0


def cmd_train(args) -> int:
    values = RunConfig.from_file(args.config) if args.config else {}
    values.update(parse_assignments(args.set))
    values["model"] = args.model
    values["ablation"] = args.ablation
    if args.seed is not None:
        values["seed"] = str(args.seed)
    cfg = RunConfig().with_values(values).resolved()
    ds = load_dataset(args.data)
    ckpt = fit(ds, cfg)
    save_checkpoint(ckpt, args.out)
    params, graphs, cfg = restore(ckpt, ds)
    report = evaluate_params(params, graphs, ds, cfg, "val")
    print(f"best_epoch={ckpt.metadata['best_epoch']}")
    print(report.to_tsv(), end="")
    return 0


def cmd_evaluate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data)
    params, graphs, cfg = restore(ckpt, ds)
    report = evaluate_params(params, graphs, ds, cfg, args.split, args.k, args.cold_threshold)
    if args.format == "json":
        print(json.dumps(report.to_dict(), indent=2))
    else:
        print(report.to_tsv(), end="")
    if args.dump_gates:
        dump_gates(params, graphs, cfg, ds, args.dump_gates)
    return 0


def dump_gates(params, graphs, cfg, ds, path) -> None:
    """Per-user gate weights and aligned/specific coordinate counts as TSV."""
    from .autodiff import Tape
    from .model import forward

    if not cfg.uses_alignment:
        raise ConfigError("--dump-gates needs a clsrec model with interest alignment")
    tape = Tape()
    fw = forward(tape, {k: tape.const(v) for k, v in params.items()}, graphs, cfg)
    gate = tape.value(fw.gate)
    b_al = (tape.value(fw.w_b) >= cfg.gamma_behavior).sum(axis=1)
    s_al = (tape.value(fw.w_s) >= cfg.gamma_social).sum(axis=1)
    names = ["behavior", "behavior_aligned", "behavior_specific", "social", "social_aligned", "social_specific"]
    header = ["user"] + [f"gate_{n}" for n in names]
    header += ["behavior_aligned_dims", "behavior_specific_dims", "social_aligned_dims", "social_specific_dims"]
    lines = ["\t".join(header)]
    for u in range(ds.n_users):
        row = [str(ds.user_ids[u])] + [f"{g:.6f}" for g in gate[u]]
        row += [str(b_al[u]), str(cfg.dim - b_al[u]), str(s_al[u]), str(cfg.dim - s_al[u])]
        lines.append("\t".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def cmd_recommend(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data)
    params, graphs, cfg = restore(ckpt, ds)
    pos = np.searchsorted(ds.user_ids, args.user)
    if pos >= ds.n_users or ds.user_ids[pos] != args.user:
        raise ConfigError(f"unknown user id {args.user}")
    user_final, item_final = final_embeddings(params, graphs, cfg)
    scores = user_final[pos] @ item_final.T
    seen = ds.interaction_matrix("train").row(pos)
    for item in rank_topk(scores, seen, args.k):
        print(f"{ds.item_ids[item]}\t{scores[item]:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="socialrec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-data", help="load raw files, split, and cache a dataset")
    p.add_argument("--dataset", choices=["lastfm", "ciao"], required=True)
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--output", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--positive-threshold", type=float, default=0.0)
    p.set_defaults(func=cmd_prepare_data)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--model", choices=["bpr", "lightgcn", "clsrec"], required=True)
    p.add_argument("--ablation", choices=["none", "no-cl", "no-cl-iia"], default="none")
    p.add_argument("--config", type=Path)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="report Precision/Recall/NDCG for a checkpoint")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--split", choices=["val", "test"], default="test")
    p.add_argument("--k", type=_parse_ks, default=(10, 20))
    p.add_argument("--cold-threshold", type=int, default=20)
    p.add_argument("--format", choices=["json", "tsv"], default="json")
    p.add_argument("--dump-gates", type=Path)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("recommend", help="print top-K items for one user")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--user", required=True, type=int)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_recommend)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(
        level=logging.INFO, format="%(message)s", stream=sys.stderr
    )
    try:
        return args.func(args)
    except SocialRecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
