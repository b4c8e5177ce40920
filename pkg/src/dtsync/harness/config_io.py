"""JSON scenario files.

Power and noise are given in dBm at the file boundary and converted to
watts once here.  Every key is required so a file fully pins a scenario.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..model import DEFAULTS, ScenarioConfig, make_config, watt_to_dbm

KEYS = (
    "K", "N", "T0_s", "B_hz", "noise_dbm_per_hz", "m", "alpha", "Q_j", "P_dbm",
    "D_bits", "A", "tau", "beta", "K0", "area_m", "shadowing_db", "pathloss",
)
PATHLOSS_KEYS = ("intercept_db", "slope")


def config_from_dict(raw: dict) -> ScenarioConfig:
    missing = [k for k in KEYS if k not in raw]
    extra = [k for k in raw if k not in KEYS]
    if missing or extra:
        raise ValueError(f"config keys mismatch: missing {missing}, unexpected {extra}")
    pl = raw["pathloss"]
    if not isinstance(pl, dict) or sorted(pl) != sorted(PATHLOSS_KEYS):
        raise ValueError(f"pathloss must have exactly the keys {PATHLOSS_KEYS}")
    return make_config(
        K=int(raw["K"]),
        N=int(raw["N"]),
        T0=float(raw["T0_s"]),
        B=float(raw["B_hz"]),
        noise_dbm_per_hz=float(raw["noise_dbm_per_hz"]),
        m=float(raw["m"]),
        alpha=float(raw["alpha"]),
        Q=np.asarray(raw["Q_j"], dtype=float),
        P_dbm=np.asarray(raw["P_dbm"], dtype=float),
        D=np.asarray(raw["D_bits"], dtype=float),
        A=np.asarray(raw["A"], dtype=float),
        tau=int(raw["tau"]),
        beta=np.asarray(raw["beta"], dtype=float),
        K0=int(raw["K0"]),
        area_m=float(raw["area_m"]),
        shadowing_db=float(raw["shadowing_db"]),
        pathloss_intercept_db=float(pl["intercept_db"]),
        pathloss_slope=float(pl["slope"]),
    )


def _compact(arr):
    """Scalar when every entry is equal, else a (nested) list."""
    a = np.asarray(arr, dtype=float)
    if a.size and np.all(a == a.flat[0]):
        return float(a.flat[0])
    return a.tolist()


def config_to_dict(config: ScenarioConfig, noise_dbm_per_hz: float | None = None) -> dict:
    if noise_dbm_per_hz is None:
        noise_dbm_per_hz = float(watt_to_dbm(config.sigma2 / config.B))
    return {
        "K": config.K,
        "N": config.N,
        "T0_s": config.T0,
        "B_hz": config.B,
        "noise_dbm_per_hz": noise_dbm_per_hz,
        "m": config.m,
        "alpha": config.alpha,
        "Q_j": np.asarray(config.Q).tolist(),
        "P_dbm": watt_to_dbm(config.P).tolist(),
        "D_bits": _compact(config.D),
        "A": _compact(config.A),
        "tau": config.tau,
        "beta": _compact(config.beta),
        "K0": config.K0,
        "area_m": config.area_m,
        "shadowing_db": config.shadowing_db,
        "pathloss": {"intercept_db": config.pathloss_intercept_db, "slope": config.pathloss_slope},
    }


def default_config_dict() -> dict:
    v = DEFAULTS
    return {
        "K": v["K"],
        "N": v["N"],
        "T0_s": v["T0"],
        "B_hz": v["B"],
        "noise_dbm_per_hz": v["noise_dbm_per_hz"],
        "m": v["m"],
        "alpha": v["alpha"],
        "Q_j": [v["Q"]] * v["K"],
        "P_dbm": [v["P_dbm"]] * v["K"],
        "D_bits": v["D"],
        "A": v["A"],
        "tau": v["tau"],
        "beta": v["beta"],
        "K0": v["K0"],
        "area_m": v["area_m"],
        "shadowing_db": v["shadowing_db"],
        "pathloss": {"intercept_db": v["pathloss_intercept_db"], "slope": v["pathloss_slope"]},
    }


def load_config(path) -> ScenarioConfig:
    return config_from_dict(load_config_dict(path))


def load_config_dict(path) -> dict:
    with open(Path(path), encoding="utf-8") as fh:
        return json.load(fh)


def save_config(config_or_dict, path) -> None:
    raw = config_or_dict if isinstance(config_or_dict, dict) else config_to_dict(config_or_dict)
    with open(Path(path), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(raw, fh, indent=2)
        fh.write("\n")
