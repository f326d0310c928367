"""Script entry: render one figure per invocation.

Either pass a YAML config as the positional argument (keys: kind, in, out)
or give --kind/--in/--out flags directly.
"""

from __future__ import annotations

import argparse
import sys

import yaml

from .figures import KINDS, FigureSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entrodiff-plots", description="Render figures from result CSVs."
    )
    parser.add_argument("config", nargs="?", help="YAML config with kind / in / out")
    parser.add_argument("--kind", choices=KINDS)
    parser.add_argument(
        "--in", dest="inputs", action="append", default=[], help="input CSV (repeatable)"
    )
    parser.add_argument("--out", help="output image path")
    return parser


def spec_from_args(args) -> FigureSpec:
    if args.config:
        try:
            with open(args.config) as fh:
                raw = yaml.safe_load(fh)
        except (OSError, yaml.YAMLError) as exc:
            raise SchemaError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(raw, dict):
            raise SchemaError("config root must be a mapping")
        kind = raw.get("kind")
        inputs = raw.get("in") or []
        out = raw.get("out")
    else:
        kind, inputs, out = args.kind, args.inputs, args.out
    if not kind or not out:
        raise SchemaError("kind and out are required (flags or config keys)")
    if isinstance(inputs, str):
        inputs = [inputs]
    return FigureSpec(kind, tuple(inputs), out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        render(spec_from_args(args))
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
