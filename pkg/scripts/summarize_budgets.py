#!/usr/bin/env python3
"""Print the budget study as a strategy x budget table of mean relative error.

Reads ``aggregate.tsv`` from a ``reproduce fig6`` output directory.
"""
import argparse
import sys
from collections import defaultdict
from pathlib import Path

from ionzne.cli import read_table


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("run_dir", type=Path, nargs="?", default=Path("results/fig6"))
    args = ap.parse_args()
    header, rows = read_table(args.run_dir / "aggregate.tsv")
    col = {h: i for i, h in enumerate(header)}
    table = defaultdict(dict)
    for r in rows:
        table[r[col["strategy"]]][int(r[col["budget"]])] = (float(r[col["mean_eps"]]), float(r[col["se_eps"]]))
    budgets = sorted({b for v in table.values() for b in v})
    print("strategy  " + "  ".join(f"{b:>13}" for b in budgets))
    for s in sorted(table):
        cells = [f"{table[s][b][0]:6.2f}+/-{table[s][b][1]:4.2f}" if b in table[s] else " " * 13 for b in budgets]
        print(f"({s})       " + "  ".join(cells))
    return 0


if __name__ == "__main__":
    sys.exit(main())
