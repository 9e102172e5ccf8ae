"""Command-line front end: fine-tune a token classifier, export embeddings."""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .config import FinetuneConfig
from .conll import ConllError, load_conll, tag_inventory
from .export import ExportError, write_embeddings
from .finetune import (
    CheckpointError,
    FinetuneResult,
    finetune,
    load_for_export,
    save_checkpoint,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="fine-tune a transformer token classifier on CoNLL data "
        "and export per-token last-hidden-layer embeddings",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "finetune", help="fine-tune on a CoNLL corpus and save a checkpoint"
    )
    p.add_argument("--model", required=True, help="pretrained identifier or path")
    p.add_argument("--train", required=True, help="CoNLL training corpus")
    p.add_argument("--out", required=True, help="checkpoint output directory")
    p.add_argument("--max-len", dest="max_len", type=int, default=200)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=3e-5)
    p.add_argument("--epochs", type=int, default=7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--no-finetune",
        dest="no_finetune",
        action="store_true",
        help="skip training and save the base checkpoint as-is",
    )

    p = sub.add_parser("export", help="write per-token embeddings for a corpus")
    p.add_argument(
        "--ckpt", required=True, help="checkpoint directory or model identifier"
    )
    p.add_argument("--corpus", required=True, help="CoNLL corpus to embed")
    p.add_argument("--out", required=True, help="embedding file to write")
    p.add_argument("--max-len", dest="max_len", type=int, default=200)
    return parser


def run(argv: Sequence[str]) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "finetune":
            config = FinetuneConfig(
                model=args.model,
                max_sequence_length=args.max_len,
                batch_size=args.batch,
                learning_rate=args.lr,
                epochs=args.epochs,
            )
            sentences = load_conll(args.train)
            if args.no_finetune:
                model, tokenizer = load_for_export(config.model)
                result = FinetuneResult(
                    model, tokenizer, tag_inventory(sentences), []
                )
            else:
                result = finetune(config, sentences, seed=args.seed)
            save_checkpoint(result, args.out)
            for epoch, loss in enumerate(result.epoch_losses, start=1):
                print(f"epoch {epoch}: mean loss {loss:.4f}")
            print(f"checkpoint written to {args.out}")
        else:
            sentences = load_conll(args.corpus)
            model, tokenizer = load_for_export(args.ckpt)
            write_embeddings(
                model, tokenizer, sentences, args.max_len, args.out
            )
            print(
                f"embeddings for {len(sentences)} sentences written to {args.out}"
            )
        return 0
    except (ConllError, ExportError, CheckpointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    raise SystemExit(run(sys.argv[1:]))
