#!/usr/bin/env python3
"""Run every sweep in scripts/sweeps/ and print mean delay per value and algorithm.

    python3 scripts/run_sweeps.py --out results/ [--jobs 4] [--only power]
"""
import argparse
import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from dtsync.harness.sweep import SweepSpec, run_sweep, write_rows

HERE = Path(__file__).resolve().parent


def summarise(rows):
    cells = defaultdict(list)
    for r in rows:
        cells[(r.value, r.algorithm)].append(r.total_delay_s if r.status == "ok" else math.inf)
    algos = sorted({a for _, a in cells})
    values = sorted({v for v, _ in cells})
    print("value".ljust(8) + "".join(a.rjust(14) for a in algos))
    for v in values:
        means = [float(np.mean(cells[(v, a)])) for a in algos]
        print(f"{v!s:8}" + "".join(f"{m:14.6f}" for m in means))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="results")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--only", action="append", help="sweep file stem(s) to run")
    ap.add_argument("--config", help="base scenario JSON")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in sorted((HERE / "sweeps").glob("*.json")):
        if args.only and path.stem not in args.only:
            continue
        spec = SweepSpec.load(path)
        rows = run_sweep(spec, args.config, deterministic=True, jobs=args.jobs)
        write_rows(rows, out / f"{path.stem}.csv")
        print(f"\n== {path.stem} ({spec.param}) -> {out / (path.stem + '.csv')}")
        summarise(rows)


if __name__ == "__main__":
    main()
