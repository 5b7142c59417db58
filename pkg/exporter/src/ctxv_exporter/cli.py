"""Command line front end: ``ctxv-export export --corpus ... --model ... --out ...``.

Exit codes follow the toolkit convention: 0 success, 1 usage error,
2 data or runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from ctxv_exporter.alignment import AlignmentError
from ctxv_exporter.export import LAYER_SELECTORS, export


def _build() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctxv-export",
        description="Export per-word contextual vectors into a CTXV teacher file.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    exp = sub.add_parser("export", help="run a model over a corpus and write teacher vectors")
    exp.add_argument("--corpus", required=True, help="pretokenized corpus, one sentence per line")
    exp.add_argument("--model", required=True, help="checkpoint name or local model directory")
    exp.add_argument(
        "--layers",
        default="last",
        choices=LAYER_SELECTORS,
        help="hidden state selector: final layer, or the sum of the last four",
    )
    exp.add_argument("--out", required=True, help="CTXV file to write")
    exp.add_argument("--skip-log", default=None, help="write skipped sentence ids here")
    exp.add_argument("--batch-size", default=8, type=int, help="sentences per forward pass")
    exp.add_argument("--device", default="cpu", help="torch device for inference")
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = _build()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 0 for --help, 2 for usage problems
        return 0 if e.code == 0 else 1
    try:
        summary = export(
            corpus=args.corpus,
            model_name=args.model,
            out=args.out,
            layers=args.layers,
            skip_log=args.skip_log,
            batch_size=args.batch_size,
            device=args.device,
        )
    except (OSError, ValueError, AlignmentError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    skipped = len(summary.skipped_ids)
    print(
        f"wrote {summary.n_written} of {summary.n_sentences} sentences "
        f"(d={summary.d}, layers={summary.layers}) to {args.out}"
        + (f", skipped {skipped} over-length" if skipped else "")
    )
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
