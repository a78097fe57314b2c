"""Command line: plot <kind> --csv PATH --out PATH (emits PNG)."""

from __future__ import annotations

import argparse
import sys

from .figures import FIGURE_KINDS, FigureError, FigureSpec, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot",
        description="Render a figure from a diagnostics CSV or convergence report",
    )
    parser.add_argument("kind", choices=FIGURE_KINDS)
    parser.add_argument("--csv", required=True, help="input CSV path")
    parser.add_argument("--out", required=True, help="output PNG path")
    args = parser.parse_args(argv)
    try:
        refits = render(FigureSpec(kind=args.kind, csv_path=args.csv,
                                   out_path=args.out))
    except (FigureError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    if refits:
        orders = " ".join(f"{k}={v:.6f}" for k, v in sorted(refits.items()))
        print(f"re-fitted orders: {orders}")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
