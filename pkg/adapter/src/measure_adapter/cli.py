"""The ``adapt`` command. Exit codes: 0 success, 2 any error."""

import argparse
import sys

from cinestyle.errors import SchemaError

from .adapt import adapt
from .config import AdapterConfig, AdapterError


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="adapt",
        description="Run (or stub) detectors on video frames and write a "
                    "measurement file the cinestyle pipeline accepts.")
    ap.add_argument("--input", required=True,
                    help="frame directory, or a video file in real mode")
    ap.add_argument("--out", required=True, help="measurement file to write")
    ap.add_argument("--period", type=float, default=0.5,
                    help="sampling period in seconds (default 0.5)")
    ap.add_argument("--stub", action="store_true",
                    help="use the bundled fixture instead of real models")
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        config = AdapterConfig(period_s=args.period, stub=args.stub)
        seq = adapt(args.input, args.out, config)
    except (AdapterError, SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"adapted {len(seq.frames)} frames -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
