#!/usr/bin/env python3
"""Per-seed delay of the proposed method against both baselines at the defaults.

    python3 scripts/compare_algorithms.py --seeds 50
"""
import argparse

import numpy as np

from dtsync.harness.sweep import run_algorithm
from dtsync.model import generate_channels, make_config


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, default=20)
    args = ap.parse_args()
    config = make_config()
    algos = ("proposed", "equal_power", "random")
    table = []
    print("seed" + "".join(a.rjust(14) for a in algos))
    for seed in range(args.seeds):
        ch = generate_channels(config, seed)
        delays = [run_algorithm(config, ch, a, seed)[1].total_delay_s for a in algos]
        table.append(delays)
        print(f"{seed:4d}" + "".join(f"{d:14.6f}" for d in delays))
    t = np.array(table)
    gain = 1 - t[:, 0] / t[:, 1]
    print("\nmean delay: " + ", ".join(f"{a}={m:.6f}" for a, m in zip(algos, t.mean(axis=0))))
    print(f"reduction vs equal power: median {100 * np.median(gain):.2f}%, max {100 * gain.max():.2f}%")


if __name__ == "__main__":
    main()
