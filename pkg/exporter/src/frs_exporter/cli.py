"""CLI: export embeddings from a TorchScript feature extractor.

    frs-export --model M.pt --images list.txt --map map.csv --out E.femb
"""

from __future__ import annotations

import argparse
import sys

from .errors import ExportError
from .export import export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frs-export",
        description="Run a pretrained face feature extractor over aligned images "
        "and write a FEMB embedding file.",
    )
    parser.add_argument("--model", required=True, help="TorchScript model file")
    parser.add_argument("--images", required=True, help="text file, one image path per line")
    parser.add_argument("--map", required=True, dest="mapping",
                        help="CSV path,subject,sample")
    parser.add_argument("--out", required=True, help="output FEMB file")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        entries = export(args.model, args.images, args.mapping, args.out)
    except ExportError as exc:
        print(f"{exc.name}: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(entries)} embeddings to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
