"""Batch figure rendering from a spec file or per-kind flags.

A spec file holds one figure spec or a list of them:
    {"kind": "xy_tomo", "inputs": ["xy_plusX_init.csv"], "output": "fig.png"}
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .render import KINDS, FigureSpec, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memory-figures",
        description="Render donor-memory CLI output files into figures",
    )
    parser.add_argument("--spec", help="JSON file with one figure spec or a list of them")
    parser.add_argument("--kind", choices=KINDS, help="figure kind (flag mode)")
    parser.add_argument("--input", action="append", default=[],
                        help="input data file (repeatable)")
    parser.add_argument("--out", help="output image path (flag mode)")
    parser.add_argument("--style", action="append", default=[],
                        help="style override key=json_value (repeatable)")
    return parser


def _parse_style(items):
    style = {}
    for item in items:
        key, _, value = item.partition("=")
        if not value:
            raise SystemExit(f"--style entries must be key=value, got {item!r}")
        try:
            style[key] = json.loads(value)
        except json.JSONDecodeError:
            style[key] = value
    return style


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    specs = []
    if args.spec:
        data = json.loads(Path(args.spec).read_text())
        items = data if isinstance(data, list) else [data]
        specs.extend(FigureSpec.from_dict(item) for item in items)
    if args.kind:
        if not args.input or not args.out:
            raise SystemExit("flag mode needs --kind, --input and --out")
        specs.append(FigureSpec(args.kind, tuple(args.input), args.out, _parse_style(args.style)))
    if not specs:
        raise SystemExit("nothing to render: pass --spec or --kind/--input/--out")
    for spec in specs:
        summary = render(spec)
        print(f"{spec.kind}: {summary['output']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
