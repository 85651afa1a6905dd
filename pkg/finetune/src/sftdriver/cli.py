"""Command line entry for the fine-tuning driver."""
from __future__ import annotations

import argparse
import json
import sys

from .records import RecordError
from .trainer import TrainConfig, train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sftdriver",
        description="LoRA fine-tuning over weighted SFT JSONL records.",
    )
    parser.add_argument("--sft", required=True, help="SFT JSONL file")
    parser.add_argument(
        "--base-model", required=True, help="model name or local path"
    )
    parser.add_argument("--output-dir", default="adapter_out")
    parser.add_argument("--rank", type=int, default=32)
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--dropout", type=float, default=0.1)
    parser.add_argument("--learning-rate", type=float, default=5e-5)
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--max-steps", type=int, default=None)
    parser.add_argument("--max-length", type=int, default=512)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--device", default="cpu")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = TrainConfig(
            sft_path=args.sft,
            base_model=args.base_model,
            adapter_rank=args.rank,
            epochs=args.epochs,
            dropout=args.dropout,
            learning_rate=args.learning_rate,
            batch_size=args.batch_size,
            max_steps=args.max_steps,
            max_length=args.max_length,
            seed=args.seed,
            device=args.device,
            output_dir=args.output_dir,
        )
        result = train(cfg)
    except (RecordError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(
        json.dumps(
            {
                "steps": result.steps,
                "initial_loss": result.initial_loss,
                "final_loss": result.final_loss,
                "adapter": str(result.adapter_path),
                "log": str(result.log_path),
            },
            indent=2,
        )
    )
    return 0


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
