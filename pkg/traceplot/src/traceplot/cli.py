"""Command line: turn trace CSVs into a convergence figure."""

from __future__ import annotations

import argparse
import glob
import sys

from .plotting import PlotSpec, X_CHOICES, Y_CHOICES, plot_traces
from .traces import SchemaError


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="traceplot",
        description="Plot solver traces: one curve per run, or a median band "
                    "per solver across seeds.",
    )
    parser.add_argument("--traces", required=True, nargs="+",
                        help="trace CSV paths or glob patterns")
    parser.add_argument("--y", default="residual", choices=Y_CHOICES)
    parser.add_argument("--x", default="iteration", choices=X_CHOICES)
    parser.add_argument("--logy", action="store_true")
    parser.add_argument("--logx", action="store_true")
    parser.add_argument("--no-band", dest="band", action="store_false",
                        help="always draw one line per seed")
    parser.add_argument("--out", required=True, help="output image path (vector)")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    files: list[str] = []
    for pattern in args.traces:
        matched = sorted(glob.glob(pattern))
        files.extend(matched if matched else [pattern])
    try:
        result = plot_traces(PlotSpec(
            trace_files=files, y=args.y, x=args.x,
            logx=args.logx, logy=args.logy, out=args.out, band=args.band,
        ))
    except (SchemaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {result.path} ({len(result.series)} series)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
