"""Experiment configuration: per-experiment defaults, YAML/JSON loading, flag overrides."""
from __future__ import annotations

import copy
import math
from pathlib import Path
from typing import Any

import yaml

EXPERIMENTS = ("ho", "2e", "ho-scaling")

_HO = {
    "grid": {"x_min": -6.0, "x_max": 6.0, "n_points": 150},
    "dataset": {"eigenstates": 15, "t_start": 0.0, "t_end": 4 * math.pi, "n_timestamps": 2000},
    "train": {"max_epochs": 2000, "activation": "softplus"},
    "propagation": {"dt": 1e-3, "n_steps": 15000, "calibration_interval": None, "record_stride": 100},
    "amplitudes": [1 / math.sqrt(2), 0.5, 1 / math.sqrt(6), 1 / math.sqrt(12)],
    "gauge": "point:0",
}

DEFAULTS: dict[str, dict[str, Any]] = {
    "ho": _HO,
    "ho-scaling": {**_HO, "eigenstate_counts": [5, 10, 15]},
    "2e": {
        "grid": {"x_min": -24.78, "x_max": 21.97, "n_points": 200},
        "dataset": {"dt": 5e-4, "t_end": 15.0, "sample_stride": 10},
        "train": {"max_epochs": 1000, "activation": "softplus"},
        "propagation": {"dt": 5e-4, "n_steps": 30000, "calibration_interval": 500, "record_stride": 10},
        "times": [5.0, 8.5, 13.0],
        "gauge": "mean:1e-3",
    },
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: str | Path | None, experiment: str | None = None) -> dict:
    """Resolve a full config: experiment defaults, then the file, then nothing else.

    Command-line flags are applied afterwards by the caller.
    """
    user = {}
    if path is not None:
        user = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        if not isinstance(user, dict):
            raise ValueError(f"{path}: config must be a mapping")
    exp = experiment or user.get("experiment") or "ho"
    if exp not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {exp!r}; choose from {EXPERIMENTS}")
    cfg = _merge({"experiment": exp, "seed": 0, "out": f"runs/{exp}", "train": {}}, DEFAULTS[exp])
    cfg = _merge(cfg, user)
    cfg["experiment"] = exp
    if cfg.get("seed") is None:
        raise ValueError("a seed is required")
    return cfg


def set_path(cfg: dict, dotted: str, value: Any) -> None:
    """Set ``cfg['a']['b'] = value`` for ``dotted = 'a.b'`` when value is not None."""
    if value is None:
        return
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value
