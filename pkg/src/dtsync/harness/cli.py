"""Command line: ``dtsync run | sweep | verify``."""
from __future__ import annotations

import argparse
import sys

from ..alternating import SolveOptions
from .config_io import default_config_dict, load_config_dict
from .sweep import ALGORITHMS, SweepSpec, cell_seed, run_cell, run_sweep, write_rows


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _u32(text: str) -> int:
    v = int(text)
    if not 1 <= v < 1 << 32:
        raise argparse.ArgumentTypeError("trials must be a positive 32-bit integer")
    return v


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="PATH", help="scenario JSON (defaults when omitted)")
    p.add_argument("--out", metavar="PATH", help="output file (stdout when omitted)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--mode", choices=("expected", "montecarlo"), default="expected",
                   help="how delivered data is scored")
    p.add_argument("--trials", type=_u32, default=1000, help="Monte-Carlo trials")
    p.add_argument("--deterministic", action="store_true",
                   help="write wall_ms as 0 so outputs are byte-reproducible")
    p.add_argument("--max-outer", type=int, default=None, help="cap on outer iterations")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dtsync", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve a single scenario")
    _common(run)
    run.add_argument("--seed", type=_u64, default=0, help="channel seed")
    run.add_argument("--algo", choices=ALGORITHMS, default="proposed")

    sweep = sub.add_parser("sweep", help="run a sweep spec file")
    sweep.add_argument("spec", metavar="SPEC", help="sweep JSON: param, values, seeds, algorithms")
    _common(sweep)
    sweep.add_argument("--seed", type=_u64, default=None, help="override the sweep file's base_seed")
    sweep.add_argument("--algo", choices=ALGORITHMS, action="append",
                       help="override the sweep file's algorithms (repeatable)")
    sweep.add_argument("--jobs", type=int, default=1, help="worker processes")

    verify = sub.add_parser("verify", help="run oracle and property checks")
    verify.add_argument("suites", nargs="*", help="check names (default: every oracle check)")
    verify.add_argument("--experiments", action="store_true",
                        help="also run the slower experiment checks")
    verify.add_argument("--seed", type=_u64, default=0)
    verify.add_argument("--list", action="store_true", help="list available checks")
    return parser


def _options(args) -> SolveOptions | None:
    if args.max_outer is None:
        return None
    return SolveOptions(max_outer=args.max_outer)


def _emit(rows, args):
    text = write_rows(rows, args.out, args.format)
    if args.out is None:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    raw = load_config_dict(args.config) if args.config else default_config_dict()
    row = run_cell(raw, None, None, args.seed, args.algo, cell_seed(args.seed, 0),
                   args.mode, args.trials, _options(args), args.deterministic)
    _emit([row], args)
    return 0 if row.status == "ok" else 2


def cmd_sweep(args) -> int:
    spec = SweepSpec.load(args.spec)
    if args.seed is not None:
        spec.base_seed = args.seed
    if args.algo:
        spec.algorithms = list(args.algo)
    spec.mode, spec.trials = args.mode, args.trials
    SweepSpec.__post_init__(spec)
    rows = run_sweep(spec, args.config, _options(args), args.deterministic, args.jobs)
    _emit(rows, args)
    return 0


def cmd_verify(args) -> int:
    from ..verify import EXPERIMENT_SUITE, ORACLE_SUITE

    available = {**ORACLE_SUITE, **EXPERIMENT_SUITE}
    if args.list:
        for name, fn in available.items():
            print(f"{name:15s} {(fn.__doc__ or '').strip().splitlines()[0]}")
        return 0
    names = args.suites or list(ORACLE_SUITE) + (list(EXPERIMENT_SUITE) if args.experiments else [])
    unknown = [n for n in names if n not in available]
    if unknown:
        print(f"unknown checks: {unknown}; use --list", file=sys.stderr)
        return 2
    ok = True
    for name in names:
        fn = available[name]
        res = fn(seed=args.seed) if name in ORACLE_SUITE else fn()
        print(res.line(), flush=True)
        ok &= res.passed
    return 0 if ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "sweep": cmd_sweep, "verify": cmd_verify}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
