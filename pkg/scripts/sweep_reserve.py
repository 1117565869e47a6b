#!/usr/bin/env python3
"""Outcome counts and dynamic checks across reserve sizes.

For each n, every corpus case is optimized and run with that reserve (cases
pinning their own ``;!reserve:`` are skipped) and the script prints one CSV
row: n, #OD, #BR, #TF, #fault, #ok, dynamic checks with all passes and with
none, and the geometric-mean reduction.

Usage: python scripts/sweep_reserve.py [corpus-dir] [--reserves 0,8,16,32,64]
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from sbir.corpus import ablate_case, geomean_reduction, load_corpus, outcome_table, run_case


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("corpus", nargs="?", default=str(Path(__file__).resolve().parent.parent / "corpus"))
    ap.add_argument("--reserves", default="0,8,16,32,64")
    ap.add_argument("--allocator", choices=("bump", "topdown"), default="bump")
    args = ap.parse_args(argv)

    cases, errors = load_corpus(args.corpus)
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    cases = [c for c in cases if c.reserve is None]
    w = csv.writer(sys.stdout)
    w.writerow(["reserve", "OD", "BR", "TF", "fault", "ok", "checks_full", "checks_none", "geomean"])
    for n in (int(x) for x in args.reserves.split(",")):
        counts = outcome_table([run_case(c, n, args.allocator) for c in cases])
        rows = {c.name: ablate_case(c, n, args.allocator) for c in cases}
        total = {cfg: sum(r.dynamicChecks for rs in rows.values() for r in rs if r.config == cfg)
                 for cfg in ("full", "none")}
        w.writerow([n, counts["OD"], counts["BR"], counts["TF"], counts["fault"], counts["ok"],
                    total["full"], total["none"], f"{geomean_reduction(rows):.2f}"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
