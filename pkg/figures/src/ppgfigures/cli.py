"""Command-line figure rendering: CSVs in, SVG+PNG out."""

from __future__ import annotations

import argparse
import sys

from .data import InputFormatError
from .figures import FigureSpec, plot_bias_decay, plot_budget_boxplot


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ppg-figures",
        description="Render experiment CSVs into bias-decay curves or "
        "budget-matched boxplots (SVG and PNG).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    decay = sub.add_parser("bias-decay")
    decay.add_argument("--records", nargs="+", required=True)
    decay.add_argument("--iterations", nargs="+", required=True)
    decay.add_argument("--fits", help="harness fit CSV; recomputed identically when absent")
    decay.add_argument("--k0-label", default="k0 = k-1")
    decay.add_argument("--out", required=True)

    box = sub.add_parser("budget-boxplot")
    box.add_argument("--records", nargs="+", required=True)
    box.add_argument("--k0-label", default="k0 = k-1")
    box.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "bias-decay":
            spec = FigureSpec(
                kind="bias_decay",
                records=tuple(args.records),
                iterations=tuple(args.iterations),
                fits=args.fits,
                k0_label=args.k0_label,
                output=args.out,
            )
            result = plot_bias_decay(spec)
        else:
            spec = FigureSpec(
                kind="budget_boxplot",
                records=tuple(args.records),
                k0_label=args.k0_label,
                output=args.out,
            )
            result = plot_budget_boxplot(spec)
    except (InputFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(result.svg_path)
    print(result.png_path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
