"""Run configuration: YAML file merged over defaults, then command-line overrides."""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path

import yaml

from .problems import PROBLEMS


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "problem": "manufactured",
    "nu": None,  # None -> the problem's own value
    "T": 1.0,
    "k": 2,
    "seed": 0,
    "solver": "auto",
    "mesh": {"type": "voronoi", "n_cells": 100, "nx": 8, "ny": 8, "file": None, "lloyd_iters": 50},
    "time": {"dt": 0.05, "r": 2, "basis": "lagrange"},
    "receivers": [[0.5, 0.5]],
    "output": {"dir": "out", "snapshots": False, "field_times": [], "receiver_dt": None},
    "jobs": 1,
    "verify": {
        "studies": ["time", "space", "combined"],
        "paper_exact": False,
        "time": {"k": 4, "n_cells": 100, "rs": [1, 2, 3], "n_slabs": [4, 8, 16, 32]},
        "space": {"ks": [1, 2, 3], "cells": [50, 200, 800, 3200], "dt": 0.01, "r": 4},
        "combined": {"ks": [1, 2, 3], "cells": [50, 200, 800], "n_slabs": [4, 8, 16]},
    },
    "validate": {"mode": "reduced", "k": 2, "r": 2, "dg_dt": 0.05,
                 "newmark_dts": [0.05, 0.025, 0.0125], "receiver": [0.5, 0.5],
                 "self_check": True, "n_cells": None, "ref_dt": None},
}


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and val is not None:
            if not isinstance(val, dict):
                raise ConfigError(f"{where!r} must be a mapping")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


def set_path(cfg: dict, dotted: str, value) -> None:
    node = cfg
    keys = dotted.split(".")
    for key in keys[:-1]:
        if key not in node or not isinstance(node[key], dict):
            raise ConfigError(f"unknown config key {dotted!r}")
        node = node[key]
    if keys[-1] not in node:
        raise ConfigError(f"unknown config key {dotted!r}")
    node[keys[-1]] = value


@dataclass(frozen=True)
class RunConfig:
    data: dict

    def __getitem__(self, key):
        return self.data[key]

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        user = {}
        if path is not None:
            try:
                user = yaml.safe_load(Path(path).read_text()) or {}
            except (OSError, yaml.YAMLError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from None
            if not isinstance(user, dict):
                raise ConfigError("config file must contain a mapping")
        data = _merge(DEFAULTS, user)
        for dotted, value in (overrides or {}).items():
            if value is not None:
                set_path(data, dotted, value)
        cfg = cls(data)
        cfg.check()
        return cfg

    def check(self) -> None:
        d = self.data
        if d["problem"] not in PROBLEMS:
            raise ConfigError(f"problem must be one of {sorted(PROBLEMS)}, got {d['problem']!r}")
        if not isinstance(d["k"], int) or d["k"] < 1:
            raise ConfigError("k must be an integer >= 1")
        t = d["time"]
        if not isinstance(t["r"], int) or t["r"] < 1:
            raise ConfigError("time.r must be an integer >= 1")
        if not (isinstance(t["dt"], (int, float)) and t["dt"] > 0):
            raise ConfigError("time.dt must be positive")
        if t["basis"] not in ("lagrange", "legendre"):
            raise ConfigError("time.basis must be 'lagrange' or 'legendre'")
        if not d["T"] > 0:
            raise ConfigError("T must be positive")
        if d["nu"] is not None and d["nu"] < 0:
            raise ConfigError("nu must be non-negative")
        m = d["mesh"]
        if m["type"] not in ("grid", "voronoi", "file"):
            raise ConfigError("mesh.type must be grid, voronoi or file")
        if m["type"] == "file" and not m["file"]:
            raise ConfigError("mesh.type=file needs mesh.file")
        if d["solver"] not in ("auto", "dense", "kronecker"):
            raise ConfigError("solver must be auto, dense or kronecker")
        if d["validate"]["mode"] not in ("reduced", "full"):
            raise ConfigError("validate.mode must be 'reduced' or 'full'")
        for name in d["verify"]["studies"]:
            if name not in ("time", "space", "combined", "stability"):
                raise ConfigError(f"unknown study {name!r}")
        for x in d["receivers"]:
            if len(x) != 2:
                raise ConfigError("receivers are [x, y] pairs")

    def dump(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.data, sort_keys=True))
