#!/usr/bin/env python3
"""Regenerate every bundled figure dataset under one output directory."""
import argparse
import sys
import time
from pathlib import Path

from ionzne import cli


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results", type=Path)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--only", nargs="*", choices=cli.FIGURES, help="subset of figure ids")
    args = ap.parse_args()
    status = 0
    for fig in args.only or cli.FIGURES:
        t0 = time.perf_counter()
        code = cli.main(["reproduce", fig, "--out", str(args.out / fig), "--workers", str(args.workers)])
        print(f"[{fig}] exit {code} in {time.perf_counter() - t0:.0f}s", file=sys.stderr)
        status = status or code
    return status


if __name__ == "__main__":
    sys.exit(main())
