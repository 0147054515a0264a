"""CLI entry points: `plot-curves <csv> <out>` and `plot-grid <csv> <out>`.

Exit codes: 0 success, 2 input format error, 3 anything else.
"""

from __future__ import annotations

import argparse
import sys

from .csvio import FormatError
from .render import render_ablation_grid, render_error_curves

EXIT_OK = 0
EXIT_FORMAT = 2
EXIT_RUNTIME = 3


def _run(render, prog: str, doc: str, argv) -> int:
    ap = argparse.ArgumentParser(prog=prog, description=doc)
    ap.add_argument("csv", help="input report CSV")
    ap.add_argument("out", help="output image (.svg or .png)")
    args = ap.parse_args(argv)
    try:
        path = render(args.csv, args.out)
    except FormatError as e:
        print(f"format error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except FileNotFoundError as e:
        print(f"format error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {path}")
    return EXIT_OK


def main_curves(argv: list[str] | None = None) -> int:
    return _run(render_error_curves, "plot-curves",
                "Render per-policy caching-error curves from a curves.csv report",
                argv)


def main_grid(argv: list[str] | None = None) -> int:
    return _run(render_ablation_grid, "plot-grid",
                "Render the cycle-length / cache-ratio ablation panels from a grid.csv report",
                argv)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main_curves())
