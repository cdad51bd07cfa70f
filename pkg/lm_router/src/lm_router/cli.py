"""Command-line entry point for training and serving the router model."""

from __future__ import annotations

import argparse
import sys

from .data import load_training_pairs, write_pairs
from .modeling import load_artifact
from .training import Hyperparams, evaluate_router, fine_tune, model_router_fn, pretrain_base


def cmd_pretrain_base(args) -> int:
    result = pretrain_base(
        args.out,
        seed=args.seed,
        n_keywords=args.keywords,
        examples_per_keyword=args.examples_per_keyword,
        epochs=args.epochs,
    )
    print(f"base checkpoint at {result.artifact_dir}, final val loss {result.final_val_loss:.6f}")
    return 0


def cmd_build_pairs(args) -> int:
    pairs = load_training_pairs(args.input)
    write_pairs(pairs, args.output)
    print(f"wrote {len(pairs)} pairs to {args.output}")
    return 0


def cmd_train(args) -> int:
    pairs = load_training_pairs(args.train_data)
    holdout = load_training_pairs(args.holdout_data)
    hp = Hyperparams(num_epochs=args.epochs)
    result = fine_tune(
        pairs,
        holdout,
        hp,
        base_dir=args.base,
        out_dir=args.out,
        seed=args.seed,
        steps_per_epoch=args.steps_per_epoch or None,
        early_stop_val_loss=args.early_stop_val_loss,
        min_epochs=args.min_epochs,
    )
    first, last = result.losses[0], result.losses[-1]
    print(
        f"trained {len(pairs)} pairs for {len(result.losses)} epochs in "
        f"{result.wall_time_seconds:.0f}s; val loss {first.val_loss:.6f} -> {last.val_loss:.6f}"
    )
    return 0


def cmd_evaluate(args) -> int:
    model, tokenizer, _ = load_artifact(args.artifact)
    holdout = load_training_pairs(args.data)
    accuracy = evaluate_router(model_router_fn(model, tokenizer), holdout)
    print(f"accuracy {accuracy:.4f} on {len(holdout)} pairs")
    return 0


def cmd_serve(args) -> int:
    from .server import serve

    serve(args.artifact, port=args.port, host=args.host)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lm-router")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("pretrain-base", help="build the local base checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--keywords", type=int, default=25)
    p.add_argument("--examples-per-keyword", type=int, default=150)
    p.add_argument("--epochs", type=int, default=16)
    p.set_defaults(func=cmd_pretrain_base)

    p = sub.add_parser("build-pairs", help="materialize prompt/target pairs from a dataset file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_build_pairs)

    p = sub.add_parser("train", help="fine-tune the router on dataset files")
    p.add_argument("--train-data", required=True)
    p.add_argument("--holdout-data", required=True)
    p.add_argument("--base", required=True, help="base checkpoint directory")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--epochs", type=int, default=Hyperparams.num_epochs)
    p.add_argument("--steps-per-epoch", type=int, default=1000,
                   help="optimizer steps per epoch as in the published log; 0 = one pass")
    p.add_argument("--early-stop-val-loss", type=float, default=None)
    p.add_argument("--min-epochs", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="holdout routing accuracy of an artifact")
    p.add_argument("--artifact", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="serve an artifact behind the wire protocol")
    p.add_argument("--artifact", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
