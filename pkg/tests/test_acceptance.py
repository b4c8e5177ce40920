"""The twelve acceptance criteria, at their stated tolerances and time limits.

Each test prints one ``[PASS]``/``[FAIL]`` line.  Results are cached per
module so the feasibility and determinism criteria can inspect the runs of
the others.
"""
import math

import pytest

from dtsync import verify
from dtsync.harness import cli
from dtsync.harness.sweep import SweepSpec, rows_to_csv, run_sweep

pytestmark = pytest.mark.slow

RESULTS = {}


def _report(capsys, number, title, passed, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if passed else 'FAIL'}] criterion {number:2d} {title}: {detail}")


def _run(key, fn, **kwargs):
    if key not in RESULTS:
        RESULTS[key] = fn(**kwargs)
    return RESULTS[key]


def _check(capsys, number, title, key, fn, limit_s, **kwargs):
    res = _run(key, fn, **kwargs)
    ok = res.passed and res.seconds <= limit_s
    shown = res.line().split(": ", 1)[1]
    _report(capsys, number, title, ok, f"{shown}, limit {limit_s:g} s, failures {res.failures}")
    assert res.passed, res.failures
    assert res.seconds <= limit_s


def test_c01_monotone_convergence(capsys):
    _check(capsys, 1, "monotone convergence", "convergence", verify.check_convergence, 300)


def test_c02_scheduling_near_optimal(capsys):
    _check(capsys, 2, "scheduling near-optimality", "scheduling", verify.check_scheduling, 60)


def test_c03_offloading_lp_exact(capsys):
    _check(capsys, 3, "offloading LP exactness", "offloading", verify.check_offloading_lp, 60)


def test_c04_power_control(capsys):
    _check(capsys, 4, "power control soundness", "power", verify.check_power_control, 180)


def test_c05_taylor(capsys):
    _check(capsys, 5, "linearisation correctness", "taylor", verify.check_taylor, 10)


def test_c06_single_device(capsys):
    _check(capsys, 6, "single-device exactness", "single_device", verify.check_single_device, 120)


def test_c07_initial_slot(capsys):
    _check(capsys, 7, "first-slot placement", "initial_slot", verify.check_initial_slot, 10)


def test_c08_trends(capsys):
    _check(capsys, 8, "trend directions", "trends", verify.check_trends, 600)


def test_c09_ordering(capsys):
    _check(capsys, 9, "algorithm ordering", "ordering", verify.check_ordering, 600)
    m = RESULTS["ordering"].metrics
    with capsys.disabled():
        print(f"           median delay reduction vs equal power: "
              f"{100 * m['median_improvement_vs_equal_power']:.2f}% "
              f"(largest {100 * m['max_improvement_vs_equal_power']:.2f}%; reported, not asserted)")


def test_c10_end_to_end_feasibility(capsys):
    need = ["convergence", "scheduling", "power", "trends", "ordering"]
    missing = [k for k in need if k not in RESULTS]
    if missing:
        pytest.skip(f"needs the runs of {missing}")
    problems = []
    # the convergence check fails a seed whose allocation is infeasible
    problems += [("convergence", s) for s in RESULTS["convergence"].failures]
    if RESULTS["ordering"].metrics["infeasible"]:
        problems.append(("ordering", RESULTS["ordering"].metrics["infeasible"]))
    if RESULTS["scheduling"].metrics["infeasible"]:
        problems.append(("scheduling", RESULTS["scheduling"].metrics["infeasible"]))
    if RESULTS["power"].metrics["worst_violation"] > 1e-6:
        problems.append(("power", RESULTS["power"].metrics["worst_violation"]))
    # trend rows: "ok" means the emitted allocation passed the checker at 1e-6;
    # the only other allowed status is a scenario rejected before solving
    emitted = 0
    for rec in RESULTS["trends"].records:
        status = rec[3]
        if status == "ok":
            emitted += 1
        elif not status.startswith("infeasible: regularity demand"):
            problems.append(("trends", rec[:3], status))
    passed = not problems
    _report(capsys, 10, "end-to-end feasibility", passed,
            f"trend allocations checked={emitted}, problems={problems}")
    assert passed


def test_c11_monte_carlo(capsys):
    _check(capsys, 11, "Monte-Carlo consistency", "montecarlo", verify.check_monte_carlo, 60)


def test_c12_determinism(capsys, tmp_path):
    mismatched = []
    # oracle criteria are cheap: rerun them in full
    for key, fn in verify.ORACLE_SUITE.items():
        first = _run(key, fn)
        if fn().to_csv() != first.to_csv():
            mismatched.append(key)
    # long experiments: rerun a leading subset of seeds and compare those records
    for key, fn, seeds in (("convergence", verify.check_convergence, range(10)),
                           ("ordering", verify.check_ordering, range(10))):
        if key not in RESULTS:
            continue
        again = fn(seeds=seeds)
        if again.records_csv() != RESULTS[key].records_csv(limit=len(again.records)):
            mismatched.append(key)
    # one full trend sweep, written to disk twice
    spec = SweepSpec("max_power_dbm", list(range(1, 9)), list(range(20)), ["proposed"])
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    runs = [run_sweep(spec, deterministic=True) for _ in paths]
    for path, rows in zip(paths, runs):
        path.write_bytes(rows_to_csv(rows).encode())
    if paths[0].read_bytes() != paths[1].read_bytes():
        mismatched.append("trend sweep")
    if "trends" in RESULTS:
        earlier = [r for r in RESULTS["trends"].records if r[0] == "max_power_dbm"]
        if [(r.param, r.value, r.seed, r.status, r.total_delay_s) for r in runs[0]] != earlier:
            mismatched.append("trend records")
    # the command line, every algorithm
    for algo in ("proposed", "random", "equal_power"):
        outs = [tmp_path / f"{algo}{i}.csv" for i in range(2)]
        for out in outs:
            cli.main(["run", "--seed", "11", "--algo", algo, "--deterministic", "--out", str(out)])
        if outs[0].read_bytes() != outs[1].read_bytes():
            mismatched.append(f"cli {algo}")
    passed = not mismatched
    _report(capsys, 12, "determinism", passed, f"mismatched={mismatched}")
    assert passed, mismatched


def test_check_csv_ignores_timing():
    a = verify.CheckResult("x", True, {"v": math.pi}, [1], 3.0, [(1, 0.1)])
    b = verify.CheckResult("x", True, {"v": math.pi}, [1], 4.0, [(1, 0.1)])
    assert a.to_csv() == b.to_csv()
    assert "3.141592653589793" in a.to_csv()
