"""Command line: export LM features and chunk files for a QA corpus."""

from __future__ import annotations

import argparse
import json
import sys

from .export import export_features
from .io import ExportError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lmexport", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="write embeddings.jsonl and chunks.jsonl")
    p.add_argument("--data", required=True, help="dataset JSONL")
    p.add_argument("--kg", required=True, help="knowledge graph JSONL")
    p.add_argument("--model", required=True, help="local path or name of a pretrained model")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--chunker", default="auto", choices=["auto", "spacy", "pattern"])
    p.add_argument("--max-length", type=int, default=256)
    p.add_argument("--json", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        paths = export_features(
            args.data, args.kg, args.model, args.out_dir,
            chunker_kind=args.chunker, max_length=args.max_length,
        )
    except ExportError as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 1
    out = {name: str(path) for name, path in paths.items()}
    print(json.dumps(out) if args.json else "\n".join(f"{k}: {v}" for k, v in out.items()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
