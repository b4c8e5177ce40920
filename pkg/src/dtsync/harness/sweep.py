"""Seeded parameter sweeps producing one result row per (value, seed, algorithm)."""
from __future__ import annotations

import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..alternating import ExperimentResult, SolveOptions, solve
from ..errors import InfeasibleError
from ..model import evaluate, generate_channels
from ..single_device import solve_single_device
from .baselines import baseline_equal_power, baseline_random
from .config_io import config_from_dict, default_config_dict, load_config_dict

PARAMS = ("max_power_dbm", "device_count", "resource_blocks", "accuracy_target")
ALGORITHMS = ("proposed", "random", "equal_power", "single_device")
CSV_COLUMNS = (
    "seed", "algorithm", "param", "value", "total_delay_s", "total_energy_j",
    "min_accuracy", "outer_iterations", "converged", "status", "wall_ms",
)


@dataclass
class SweepSpec:
    param: str
    values: list
    seeds: list
    algorithms: list = field(default_factory=lambda: ["proposed"])
    base_seed: int = 0
    mode: str = "expected"
    trials: int = 1000

    def __post_init__(self):
        if self.param not in PARAMS:
            raise ValueError(f"param must be one of {PARAMS}, got {self.param!r}")
        for name in ("values", "seeds", "algorithms"):
            if not list(getattr(self, name)):
                raise ValueError(f"{name} must be a nonempty list")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ValueError(f"unknown algorithms {bad}; choose from {ALGORITHMS}")
        if self.mode not in ("expected", "montecarlo"):
            raise ValueError("mode must be 'expected' or 'montecarlo'")

    def cells(self):
        """``(index, value, seed, algorithm)`` in output order."""
        i = 0
        for value in self.values:
            for seed in self.seeds:
                for algo in self.algorithms:
                    yield i, value, int(seed), algo
                    i += 1

    @classmethod
    def from_dict(cls, raw: dict) -> "SweepSpec":
        return cls(**raw)

    @classmethod
    def load(cls, path) -> "SweepSpec":
        with open(Path(path), encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class ResultRow:
    seed: int
    algorithm: str
    param: str
    value: float | None
    total_delay_s: float
    total_energy_j: float
    min_accuracy: float
    outer_iterations: int
    converged: bool
    status: str
    wall_ms: float

    @classmethod
    def failed(cls, seed, algorithm, param, value, status, wall_ms=0.0) -> "ResultRow":
        nan = math.nan
        return cls(seed, algorithm, param, value, nan, nan, nan, 0, False, status, wall_ms)


def _per_device(value, K):
    """Resize a per-device list to K entries; uniform lists broadcast, others are cut."""
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == K or arr.size == 1:
        return arr.tolist() if arr.size == K else float(arr[0])
    if np.all(arr == arr[0]):
        return float(arr[0])
    if arr.size > K:
        return arr[:K].tolist()
    raise ValueError(f"cannot extend a nonuniform per-device list of length {arr.size} to K={K}")


def apply_override(raw: dict, param: str, value) -> dict:
    """Config dict with one swept parameter replaced."""
    out = json.loads(json.dumps(raw))
    if param == "max_power_dbm":
        out["P_dbm"] = [float(value)] * int(out["K"])
    elif param == "resource_blocks":
        out["K0"] = int(value)
    elif param == "accuracy_target":
        out["A"] = float(value)
    elif param == "device_count":
        K = int(value)
        out["K"] = K
        out["Q_j"] = _per_device(out["Q_j"], K)
        out["P_dbm"] = _per_device(out["P_dbm"], K)
        if isinstance(out["beta"], list):
            out["beta"] = _per_device(out["beta"], K)
        D = np.asarray(out["D_bits"], dtype=float)
        if D.ndim == 2 and D.shape[1] != K:
            if np.all(D == D.flat[0]):
                out["D_bits"] = float(D.flat[0])
            elif D.shape[1] > K:
                out["D_bits"] = D[:, :K].tolist()
            else:
                raise ValueError(f"cannot extend nonuniform D_bits to K={K}")
        # K0 cannot exceed the device count
        out["K0"] = min(int(out["K0"]), K)
    else:
        raise ValueError(f"unknown param {param!r}")
    return out


def cell_seed(base_seed: int, index: int) -> int:
    """Independent per-cell seed derived from the sweep seed and cell index."""
    return int(np.random.SeedSequence([int(base_seed), int(index)]).generate_state(1, dtype=np.uint64)[0])


def run_algorithm(config, channels, algorithm: str, seed: int, options: SolveOptions | None = None):
    """Dispatch one algorithm; returns ``(allocation, result)``."""
    if algorithm == "proposed":
        alloc, _, res = solve(config, channels, options)
    elif algorithm == "random":
        alloc, _, res = baseline_random(config, channels, seed, options)
    elif algorithm == "equal_power":
        alloc, _, res = baseline_equal_power(config, channels, options)
    elif algorithm == "single_device":
        start = time.perf_counter()
        alloc, trace = solve_single_device(config, channels)
        ev = evaluate(alloc, config, channels)
        res = ExperimentResult(
            algorithm=algorithm,
            total_delay_s=ev.total_delay,
            total_energy_j=float(ev.energies.sum()),
            min_accuracy=float(ev.accuracies.min()),
            outer_iterations=trace.iterations,
            converged=trace.converged,
            status="ok" if ev.report.feasible else "infeasible",
            wall_ms=(time.perf_counter() - start) * 1e3,
            feasible=ev.report.feasible,
            violations=dict(ev.report.violations),
        )
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    return alloc, res


def run_cell(raw: dict, param: str | None, value, seed: int, algorithm: str, rng_seed: int,
             mode: str = "expected", trials: int = 1000, options: SolveOptions | None = None,
             deterministic: bool = False) -> ResultRow:
    """Solve one scenario and score it; failures end up in ``status``."""
    start = time.perf_counter()
    label = "" if param is None else param

    def elapsed():
        return 0.0 if deterministic else (time.perf_counter() - start) * 1e3

    try:
        cfg_raw = raw if param is None else apply_override(raw, param, value)
        config = config_from_dict(cfg_raw)
        channels = generate_channels(config, seed)
        alloc, res = run_algorithm(config, channels, algorithm, rng_seed, options)
    except InfeasibleError as err:
        return ResultRow.failed(seed, algorithm, label, value, f"infeasible: {err}", elapsed())
    except (ValueError, RuntimeError) as err:
        return ResultRow.failed(seed, algorithm, label, value, f"error: {err}", elapsed())
    min_acc, energy = res.min_accuracy, res.total_energy_j
    if mode == "montecarlo":
        ev = evaluate(alloc, config, channels, mode="montecarlo", seed=rng_seed % (1 << 63), trials=trials)
        min_acc, energy = float(ev.accuracies.min()), float(ev.energies.sum())
    status = "ok" if res.feasible else "infeasible: " + ",".join(
        k for k, v in res.violations.items() if v > 1e-6)
    return ResultRow(
        seed=seed, algorithm=algorithm, param=label, value=value,
        total_delay_s=res.total_delay_s, total_energy_j=energy, min_accuracy=min_acc,
        outer_iterations=res.outer_iterations, converged=res.converged, status=status,
        wall_ms=elapsed(),
    )


def _run_cell_args(args):
    return run_cell(*args)


def run_sweep(spec: SweepSpec, base_config=None, options: SolveOptions | None = None,
              deterministic: bool = False, jobs: int = 1) -> list[ResultRow]:
    """Run every cell of ``spec``; rows come back in cell order whatever ``jobs`` is.

    ``base_config`` is a path to a JSON scenario, a config dict, or ``None``
    for the defaults.
    """
    if base_config is None:
        raw = default_config_dict()
    elif isinstance(base_config, dict):
        raw = base_config
    else:
        raw = load_config_dict(base_config)
    args = [
        (raw, spec.param, value, seed, algo, cell_seed(spec.base_seed, i),
         spec.mode, spec.trials, options, deterministic)
        for i, value, seed, algo in spec.cells()
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_cell_args, args))
    return [_run_cell_args(a) for a in args]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "{:.9g}".format(float(v))
    return str(v)


def _csv_field(text: str) -> str:
    if any(ch in text for ch in ',"\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for row in rows:
        rec = asdict(row)
        buf.write(",".join(_csv_field(_fmt(rec[c])) for c in CSV_COLUMNS) + "\n")
    return buf.getvalue()


def _json_value(v):
    if isinstance(v, (float, np.floating)):
        v = float("{:.9g}".format(float(v)))
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


def rows_to_json(rows) -> str:
    out = [{c: _json_value(asdict(r)[c]) for c in CSV_COLUMNS} for r in rows]
    return json.dumps(out, indent=2) + "\n"


def write_rows(rows, path=None, fmt: str = "csv") -> str:
    """Serialise rows; writes to ``path`` (LF endings) when given, returns the text."""
    text = rows_to_csv(rows) if fmt == "csv" else rows_to_json(rows)
    if path is not None:
        with open(Path(path), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text
