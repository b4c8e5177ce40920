#!/usr/bin/env python3
"""Run the oracle checks and, with --experiments, the convergence/ordering/trend checks.

Writes each check's CSV next to a one-line summary, e.g.

    python3 scripts/run_checks.py --experiments --out results/checks
"""
import argparse
import sys
from pathlib import Path

from dtsync.verify import EXPERIMENT_SUITE, ORACLE_SUITE


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--experiments", action="store_true")
    ap.add_argument("--out", default=None, help="directory for per-check CSV files")
    args = ap.parse_args()
    suite = dict(ORACLE_SUITE)
    if args.experiments:
        suite.update(EXPERIMENT_SUITE)
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    ok = True
    for name, fn in suite.items():
        res = fn()
        print(res.line(), flush=True)
        ok &= res.passed
        if out:
            (out / f"{name}.csv").write_text(res.to_csv(), encoding="utf-8")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
