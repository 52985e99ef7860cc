"""Command line front end mirroring the extraction job fields."""

import argparse
import json
import sys

from . import __version__
from .job import ExtractError, ExtractJob
from .runner import extract_attention, grad_importance


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attn-extract",
        description="Dump transformer attention maps and gradient reports")
    parser.add_argument("--version", action="version",
                        version=f"attn-extract {__version__}")
    parser.add_argument("--model", required=True,
                        help="checkpoint directory or hub identifier")
    parser.add_argument("--input", required=True,
                        help="text file, one segment per line")
    parser.add_argument("--out-extract", help="attention container to write")
    parser.add_argument("--out-grad", help="gradient importance report to write")
    parser.add_argument("--per-head-grad",
                        help="also dump raw per-head gradient means (JSON)")
    parser.add_argument("--max-length", type=int, default=128)
    parser.add_argument("--paired", action="store_true",
                        help="treat consecutive line pairs as one segment")
    parser.add_argument("--random-init", action="store_true",
                        help="keep word and position embeddings, re-initialize the rest")
    parser.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.out_extract and not args.out_grad:
        parser.error("nothing to do: pass --out-extract and/or --out-grad")
    if args.per_head_grad and not args.out_grad:
        parser.error("--per-head-grad requires --out-grad")
    job = ExtractJob(args.model, args.input, max_length=args.max_length,
                     paired=args.paired, random_init=args.random_init,
                     seed=args.seed)
    summary = {}
    try:
        if args.out_extract:
            result = extract_attention(job, args.out_extract)
            summary.update({"segments": result.segments,
                            "truncated": result.truncated,
                            "extract": args.out_extract})
        if args.out_grad:
            result = grad_importance(job, args.out_grad, args.per_head_grad)
            summary.update({"grad_segments": result.segments,
                            "masked_tokens": result.masked_tokens,
                            "grad_report": args.out_grad})
    except ExtractError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}))
        return 1
    except OSError as exc:
        print(json.dumps({"error": "error", "message": str(exc)}))
        return 1
    print(json.dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
