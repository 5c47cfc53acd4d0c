"""Full vs incremental vs hybrid ingestion over four identical bank tables.

    python3 scripts/run_benchmark.py --sizes 100k,1m --seed 0 --out results/bench.json

Writes the JSON results, a size x scenario CSV next to it, and prints the
ordering check (incremental < hybrid < full, each gap at least 10%).
"""

import argparse
import json
import logging
import shutil
import tempfile
from pathlib import Path

from lakeflow import bench

GAP = 1.10


def ordering(row: dict) -> tuple[bool, str]:
    inc, hyb, full = row["incremental_wall_ms"], row["hybrid_wall_ms"], row["full_wall_ms"]
    ok = hyb >= GAP * inc and full >= GAP * hyb
    return ok, f"hybrid/incremental={hyb / inc:.2f} full/hybrid={full / hyb:.2f}"


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", default="100k,1m")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--change-fraction", type=float, default=0.40)
    p.add_argument("--method", choices=("hash", "date"), default="hash")
    p.add_argument("--out", default="results/bench.json")
    p.add_argument("--scratch", help="work directory (default: a temporary one, removed afterwards)")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    sizes = [bench.parse_size(s) for s in args.sizes.split(",")]
    scratch = Path(args.scratch) if args.scratch else Path(tempfile.mkdtemp(prefix="lakeflow-bench-"))
    try:
        results = bench.run_benchmark(sizes, scratch / "lakes", scratch / "data", args.seed,
                                      change_fraction=args.change_fraction,
                                      incremental_method=args.method)
    finally:
        if not args.scratch:
            shutil.rmtree(scratch, ignore_errors=True)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    bench.write_results_json(results, out)
    bench.write_summary_csv(results, out.with_suffix(".csv"))
    for row in bench.summary_rows(results):
        ok, detail = ordering(row)
        print(json.dumps(row))
        print(f"size {row['size']}: ordering {'holds' if ok else 'VIOLATED'} ({detail})")


if __name__ == "__main__":
    main()
