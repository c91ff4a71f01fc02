"""plot command: render panels from one or more trace CSVs.

    plot --trace a.csv [--trace b.csv] --panels speed_tracking,spacing_error \
         --out fig.png [--title ...]

Exit codes: 0 success, 2 bad arguments or malformed/missing trace data.
"""

from __future__ import annotations

import argparse
import sys

from .panels import PANELS, PlotSpec, render
from .reader import TraceError


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="plot",
        description="Render comparison panels from mracsim trace CSVs",
    )
    parser.add_argument(
        "--trace", action="append", required=True,
        help="trace CSV (repeat to overlay runs)",
    )
    parser.add_argument(
        "--panels", default="speed_tracking,spacing_error",
        help=f"comma list from: {', '.join(sorted(PANELS))}",
    )
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--title", default="")
    parser.add_argument("--dpi", type=int, default=120)
    args = parser.parse_args(argv)

    panels = [p.strip() for p in args.panels.split(",") if p.strip()]
    try:
        out = render(PlotSpec(args.trace, panels, args.out, args.title, args.dpi))
    except (TraceError, OSError) as ex:
        print(f"plot error: {ex}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
