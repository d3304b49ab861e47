"""Command line for one-shot extraction runs."""

from __future__ import annotations

import argparse
import sys

from .errors import InputFormatError, ModelLoadError, ValidationError
from .extract import ExtractionSpec, extract


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="conetext",
        description="Pool transformer representations into an EMBV1 file.",
    )
    p.add_argument("--model", required=True, help="model name or local path")
    p.add_argument("--input", required=True,
                   help="UTF-8 file of label<TAB>text lines")
    p.add_argument("--out", required=True, help="output .emb path")
    p.add_argument("--pooling", choices=["first", "tokens"], default="first")
    p.add_argument("--layer", type=int, default=-1,
                   help="hidden-state index, -1 is the last layer")
    p.add_argument("--max-length", type=int, default=128, dest="max_length")
    p.add_argument("--batch-size", type=int, default=32, dest="batch_size")
    p.add_argument("--task-id", dest="task_id",
                   help="stored task id (default: input file stem)")
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        spec = ExtractionSpec(
            model=args.model,
            input_path=args.input,
            output_path=args.out,
            pooling=args.pooling,
            layer=args.layer,
            max_length=args.max_length,
            batch_size=args.batch_size,
            task_id=args.task_id,
        )
        summary = extract(spec)
    except (ValidationError, InputFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ModelLoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(
        f"conetext: {summary['examples']} examples -> {summary['rows']} rows "
        f"(d={summary['dimension']}, classes={summary['classes']}) "
        f"-> {summary['output']}"
    )
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
