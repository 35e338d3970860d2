"""plotgen CLI: render simulator sweep CSVs into figures.

Either ``plotgen --spec spec.json`` or the per-kind flags:
``plotgen --input sweep.csv --kind naee_vs_sigma2 --output fig.svg
[--overlay ref_ebt_e6 --overlay ref_sat_e2]``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .figures import FIGURE_KINDS, FigureSpec, PlotgenError, render


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="plotgen")
    ap.add_argument("--spec", help="JSON figure spec")
    ap.add_argument("--input", help="sweep CSV")
    ap.add_argument("--kind", choices=FIGURE_KINDS)
    ap.add_argument("--output", help="image path (.svg or .png)")
    ap.add_argument("--overlay", action="append", default=[],
                    help="analytic reference column to overlay (repeatable)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.spec:
            spec = FigureSpec.from_dict(json.loads(Path(args.spec).read_text()))
        else:
            if not (args.input and args.kind and args.output):
                print("error: need --spec or all of --input/--kind/--output",
                      file=sys.stderr)
                return 2
            spec = FigureSpec(input_csv=args.input, kind=args.kind,
                              output=args.output, overlays=tuple(args.overlay))
        image, sidecar = render(spec)
    except (PlotgenError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {image} and {sidecar}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
