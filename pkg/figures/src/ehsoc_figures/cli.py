"""Command line wrapper: render --kind <k> --in <csv> --out <img>."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import KINDS, DataError, FigureSpec, SchemaError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="render",
        description="Render an experiment CSV into a figure")
    parser.add_argument("--kind", required=True, choices=sorted(KINDS),
                        help="figure kind / expected CSV schema")
    parser.add_argument("--in", dest="input_csv", required=True,
                        help="input CSV path")
    parser.add_argument("--out", dest="output_path", required=True,
                        help="output image path (.png; --vector for .pdf/.svg)")
    parser.add_argument("--vector", action="store_true",
                        help="allow vector output formats")
    args = parser.parse_args(argv)
    spec = FigureSpec(kind=args.kind, input_csv=Path(args.input_csv),
                      output_path=Path(args.output_path), vector=args.vector)
    try:
        out = render(spec)
    except (SchemaError, DataError, OSError) as exc:
        print(f"render error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


def entry():
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
