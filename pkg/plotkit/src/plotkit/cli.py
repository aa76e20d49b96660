"""plotkit CLI: one subcommand per figure type.

Reward curves are smoothed with a moving average (window 20). Rendering
is deterministic: identical input CSVs produce identical image bytes.
"""

from __future__ import annotations

import argparse
import sys

from plotkit.figures import FIGURE_IDS, FigureSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plotkit", description=__doc__)
    sub = parser.add_subparsers(dest="figure", required=True)
    for figure_id in FIGURE_IDS:
        p = sub.add_parser(figure_id, help=f"render the {figure_id} figure")
        if figure_id == "reward_curve":
            p.add_argument("--input", action="append", required=True, help="metrics CSV (repeatable)")
            p.add_argument("--label", action="append", default=None, help="one label per --input")
        else:
            p.add_argument("--input", required=True, help="sweep CSV")
        p.add_argument("--output", required=True, help="image file to write")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    inputs = args.input if isinstance(args.input, list) else [args.input]
    labels = getattr(args, "label", None) or []
    spec = FigureSpec(figure_id=args.figure, inputs=inputs, output=args.output, labels=labels)
    try:
        path = render(spec)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
