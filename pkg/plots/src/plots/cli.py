"""Command line: plots render --spec <json> --out <path>."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .figures import SchemaError, from_json, render


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="plots", description="regenerate experiment figures")
    sub = ap.add_subparsers(dest="verb", required=True)
    rp = sub.add_parser("render")
    rp.add_argument("--spec", required=True, help="figure spec JSON")
    rp.add_argument("--out", required=True, help="output image path (png/svg)")
    args = ap.parse_args(argv)
    try:
        payload = json.loads(Path(args.spec).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return 2
    specs = payload if isinstance(payload, list) else [payload]
    outs = [args.out] if len(specs) == 1 else [
        str(Path(args.out).with_suffix("")) + f"_{i}" + Path(args.out).suffix
        for i in range(len(specs))]
    try:
        for spec_json, out in zip(specs, outs):
            render(from_json(spec_json), out)
    except (SchemaError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
