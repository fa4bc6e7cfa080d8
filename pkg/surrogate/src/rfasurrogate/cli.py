"""Command line for surrogate training and prediction.

`train` reads an engine dataset directory (optionally with splits.json) and
writes checkpoint.pt plus history.jsonl; `predict` writes container-format
prediction volumes plus a latency report, ready for the engine's
`rfasim evaluate` tool.
"""

from __future__ import annotations

import argparse
import json
import sys

from .data import list_samples, load_split_ids, select_split
from .models import NetSpec
from .predict import predict
from .train import LOSS_WEIGHT_PRESETS, TrainConfig, load_checkpoint, train


def _refs_for(args, split: str | None):
    refs = list_samples(args.data)
    if split is None:
        return refs
    ids = load_split_ids(args.data, split)
    return select_split(refs, ids)


def cmd_train(args) -> int:
    spec = NetSpec(
        arch=args.arch, task=args.task, base_width=args.width, attn_heads=args.heads
    )
    if args.loss_preset:
        alpha, beta, gamma = LOSS_WEIGHT_PRESETS[args.loss_preset]
    else:
        alpha, beta, gamma = args.alpha, args.beta, args.gamma
    cfg = TrainConfig(
        lr=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        hot_weight=args.hot_weight,
        seed=args.seed,
    )
    if args.train_split:
        train_refs = _refs_for(args, args.train_split)
        val_refs = _refs_for(args, args.val_split) if args.val_split else []
    else:
        refs = _refs_for(args, None)
        n_val = max(1, len(refs) // 10)
        train_refs, val_refs = refs[:-n_val], refs[-n_val:]
    checkpoint = train(spec, train_refs, val_refs, args.out, cfg)
    print(json.dumps({"checkpoint": str(checkpoint), "train": len(train_refs), "val": len(val_refs)}))
    return 0


def cmd_predict(args) -> int:
    model, spec = load_checkpoint(args.checkpoint)
    refs = _refs_for(args, args.split)
    summary = predict(model, spec.task, refs, args.out)
    print(json.dumps({"task": spec.task, "out": str(args.out), "latency": summary}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rfa-surrogate", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train")
    p.add_argument("--data", required=True, help="engine dataset directory")
    p.add_argument("--arch", choices=("edcnn", "unet", "attn_unet"), default="unet")
    p.add_argument("--task", choices=("lesion", "temperature"), default="lesion")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=0.7)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--gamma", type=float, default=0.2)
    p.add_argument("--hot-weight", type=float, default=10.0)
    p.add_argument("--loss-preset", choices=sorted(LOSS_WEIGHT_PRESETS))
    p.add_argument("--train-split", help="split name in splits.json (default: 90/10 of all)")
    p.add_argument("--val-split", default="val")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("predict")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", help="restrict to a split from splits.json")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_predict)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
