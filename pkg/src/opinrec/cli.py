"""Command-line entry point: ``opinrec <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .corpus import MAX_SKIP_FRACTION, ingest_jsonl, read_pairs, write_pairs, write_reviews_jsonl
from .model import OpinionModel, load_config_file
from .training import TrainConfig, train

log = logging.getLogger("opinrec")


def _resolve(base: Path, value) -> Path | None:
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else base / p


def load_run_config(path) -> dict:
    """Read a train/grid config (TOML or JSON).

    Top-level keys ``data``, ``checkpoint``, ``metrics`` and ``checkpoint_dir``
    are paths relative to the config file; ``[model]`` and ``[train]`` hold
    :class:`ModelConfig` and :class:`TrainConfig` fields.
    """
    path = Path(path)
    raw = load_config_file(path)
    base = path.parent
    out = dict(raw)
    for key in ("data", "checkpoint", "metrics", "checkpoint_dir"):
        if key in raw:
            out[key] = _resolve(base, raw[key])
    tc = dict(raw.get("train", {}))
    tc["model"] = raw.get("model", {})
    out["train_config"] = TrainConfig.from_dict(tc)
    return out


# ------------------------------------------------------------------ commands


def cmd_synth(args) -> int:
    from .evaluation.synthetic import SyntheticConfig, generate

    corp = generate(SyntheticConfig(n_users=args.users, n_products=args.products, seed=args.seed,
                                    extra_train_pairs=args.extra_train_pairs))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_reviews_jsonl(out / "reviews.jsonl", corp.reviews)
    write_pairs(out / "pairs.tsv", corp.pairs)
    print(f"wrote {len(corp.reviews)} reviews and {len(corp.pairs)} pairs to {out}")
    return 0


def cmd_prepare(args) -> int:
    ing = ingest_jsonl(args.reviews, max_skip_fraction=args.max_skip_fraction)
    for lineno, msg in ing.diagnostics:
        print(f"{args.reviews}:{lineno}: {msg}", file=sys.stderr)
    data = pipeline.stage_prepare(ing.records, read_pairs(args.pairs), args.out, args.min_count, args.seq_cap)
    n = {s: len(v) for s, v in data.instances.items()}
    print(f"instances train={n['train']} dev={n['dev']} test={n['test']} vocab={len(data.vocab)} -> {args.out}")
    return 0


def cmd_train_embeddings(args) -> int:
    table = pipeline.stage_embeddings(args.data, args.dim, args.epochs, args.window, args.negatives, args.seed)
    last = table.losses[-1] if table.losses else float("nan")
    print(f"embeddings {table.vectors.shape} final loss {last:.4f} -> {Path(args.data) / 'embeddings.tsv'}")
    return 0


def cmd_neighbors(args) -> int:
    table = pipeline.stage_neighbors(args.data, args.eta, args.topics, args.sweeps, args.seed)
    with_n = sum(1 for v in table.values() if v)
    print(f"{with_n}/{len(table)} users have neighbours (eta={args.eta}, topics={args.topics})")
    return 0


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    data_dir = Path(args.data) if args.data else cfg.get("data")
    ckpt = Path(args.checkpoint) if args.checkpoint else cfg.get("checkpoint")
    if data_dir is None or ckpt is None:
        raise SystemExit("config needs 'data' and 'checkpoint' (or pass --data/--checkpoint)")
    metrics = cfg.get("metrics") or ckpt.with_suffix(".metrics.csv")
    tc: TrainConfig = cfg["train_config"]
    data = pipeline.load_data_dir(data_dir)
    vectors = data.embeddings(tc.model.emb_dim, tc.model.seed)
    model = OpinionModel(data.vocab, tc.model, vectors)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    res = train(model, data.instances["train"], data.instances["dev"], tc, metrics_path=metrics,
                checkpoint_path=ckpt)
    best = res.history[res.best_epoch - 1]
    print(f"best epoch {res.best_epoch}: dev_mse={best['dev_mse']:.4f} -> {ckpt}")
    return 0


def cmd_evaluate(args) -> int:
    from .evaluation.grid import GridConfig, run_grid

    ckpt = Path(args.checkpoint)
    data = pipeline.load_data_dir(args.data)
    splits = ("dev", args.split) if args.split != "dev" else ("dev",)
    res = run_grid(data, GridConfig(checkpoint_dir=ckpt.parent, report_dir=Path(args.report), joint_checkpoint=ckpt,
                                    splits=splits, seed=args.seed))
    print(res.table(), end="")
    print(f"report written to {args.report}")
    return 0


def cmd_grid(args) -> int:
    from .evaluation.grid import GridConfig, run_grid, train_grid

    cfg = load_run_config(args.config)
    data = pipeline.load_data_dir(Path(args.data) if args.data else cfg["data"])
    ck = Path(args.checkpoint_dir) if args.checkpoint_dir else cfg.get("checkpoint_dir")
    if ck is None:
        raise SystemExit("config needs 'checkpoint_dir' (or pass --checkpoint-dir)")
    if not args.no_train:
        train_grid(data, cfg["train_config"], ck, parts=args.parts)
    res = run_grid(data, GridConfig(checkpoint_dir=ck, report_dir=Path(args.report)))
    print(res.table(), end="")
    return 0


def cmd_recommend(args) -> int:
    data = pipeline.load_data_dir(args.data)
    model = OpinionModel.load(args.checkpoint)
    inst = pipeline.query_instance(data, args.user, args.product)
    out = model.recommend(inst, args.max_len)
    if not args.top5:
        out.pop("top5")
    print(json.dumps(out, indent=2 if args.pretty else None))
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="opinrec", description="Personalised rating and review generation.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a planted-bias synthetic corpus (reviews.jsonl + pairs.tsv)")
    p.add_argument("--out", required=True)
    p.add_argument("--users", type=int, default=200)
    p.add_argument("--products", type=int, default=50)
    p.add_argument("--extra-train-pairs", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="build vocabulary and train/dev/test instances")
    p.add_argument("--reviews", required=True, help="review JSONL")
    p.add_argument("--pairs", required=True, help="TSV of user_id, product_id, split")
    p.add_argument("--out", required=True, help="data directory to create")
    p.add_argument("--min-count", type=int, default=2)
    p.add_argument("--seq-cap", type=int, default=30)
    p.add_argument("--max-skip-fraction", type=float, default=MAX_SKIP_FRACTION)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train-embeddings", help="skip-gram vectors over the context reviews")
    p.add_argument("--data", default="data")
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_embeddings)

    p = sub.add_parser("neighbors", help="factorise the rating matrix and attach neighbour reviews")
    p.add_argument("--data", default="data")
    p.add_argument("--eta", type=float, default=0.25)
    p.add_argument("--topics", type=int, default=16)
    p.add_argument("--sweeps", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_neighbors)

    p = sub.add_parser("train", help="train one model from a TOML/JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--data")
    p.add_argument("--checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint, the baselines and any sweep checkpoints beside it")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=("dev", "test"))
    p.add_argument("--report", required=True, help="output directory for CSV, text table and figures")
    p.add_argument("--data", default="data")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("grid", help="train and score the ablation grid and sweeps")
    p.add_argument("--config", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--data")
    p.add_argument("--checkpoint-dir")
    p.add_argument("--parts", nargs="+", default=["ablations", "hops", "mu"], choices=("ablations", "hops", "mu"))
    p.add_argument("--no-train", action="store_true", help="only score existing checkpoints")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("recommend", help="predict a rating and review for one user/product pair")
    p.add_argument("--user", required=True)
    p.add_argument("--product", required=True)
    p.add_argument("--data", default="data")
    p.add_argument("--checkpoint", default="runs/joint.ckpt")
    p.add_argument("--max-len", type=int)
    p.add_argument("--top5", action="store_true", help="include per-step top-5 token probabilities")
    p.add_argument("--pretty", action="store_true")
    p.set_defaults(func=cmd_recommend)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"opinrec {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
