"""CLI: `lorp-extract capture` writes LADF dumps, `lorp-extract apply` prunes checkpoints."""

from __future__ import annotations

import argparse
import sys

from .capture import CaptureConfig, UnsupportedArchitectureError, capture
from .surgery import PlanError, apply_plan


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lorp-extract",
        description="Bridge between transformer checkpoints and the pruning planner.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_cap = sub.add_parser("capture", help="record block-input hidden states into an LADF dump")
    p_cap.add_argument("--model", required=True, help="checkpoint path or identifier")
    p_cap.add_argument("--corpus", default=None, help="text file, one document per line (default: seeded random token ids)")
    p_cap.add_argument("--samples", type=int, default=128, help="calibration sequences (default 128)")
    p_cap.add_argument("--seq-len", type=int, default=2048, help="tokens per sequence (default 2048)")
    p_cap.add_argument("--seed", type=int, default=0)
    p_cap.add_argument("--device", default="cpu")
    p_cap.add_argument("--out", default="activations.ladf", help="output dump path")
    p_cap.set_defaults(func=cmd_capture)

    p_apply = sub.add_parser("apply", help="delete the planned layers from a checkpoint")
    p_apply.add_argument("--model", required=True, help="checkpoint path or identifier")
    p_apply.add_argument("--plan", required=True, help="pruning plan JSON")
    p_apply.add_argument("--out", required=True, help="output checkpoint directory")
    p_apply.set_defaults(func=cmd_apply)

    return parser


def cmd_capture(args: argparse.Namespace) -> int:
    config = CaptureConfig(
        model_id=args.model,
        corpus_path=args.corpus,
        n_samples=args.samples,
        seq_len=args.seq_len,
        output_path=args.out,
        seed=args.seed,
        device=args.device,
    )
    n_blocks, tokens = capture(config)
    print(f"captured {tokens} tokens across {n_blocks} blocks -> {args.out}")
    return 0


def cmd_apply(args: argparse.Namespace) -> int:
    remaining = apply_plan(args.model, args.plan, args.out)
    print(f"pruned checkpoint with {remaining} blocks -> {args.out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (PlanError, UnsupportedArchitectureError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
