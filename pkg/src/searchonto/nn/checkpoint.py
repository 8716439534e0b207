"""JSON checkpoints: ``{"config": {...}, "params": {name: {shape, data}}}``.

Floats are written with Python's shortest round-tripping repr, so a
save/load cycle reproduces every parameter bit for bit.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np


class CheckpointError(ValueError):
    pass


def encode(params: dict[str, np.ndarray], config: dict) -> dict:
    return {
        "config": config,
        "params": {
            name: {"shape": list(arr.shape), "data": [float(x) for x in arr.ravel()]}
            for name, arr in sorted(params.items())
        },
    }


def decode(blob: dict) -> tuple[dict[str, np.ndarray], dict]:
    try:
        config = blob["config"]
        params = {}
        for name, entry in blob["params"].items():
            shape = tuple(int(s) for s in entry["shape"])
            data = np.asarray(entry["data"], dtype=np.float64)
            if data.size != int(np.prod(shape)):
                raise CheckpointError(f"{name}: {data.size} values for shape {shape}")
            params[name] = data.reshape(shape)
    except (KeyError, TypeError) as e:
        raise CheckpointError(f"malformed checkpoint: missing {e}") from None
    return params, config


def dumps(params, config) -> str:
    return json.dumps(encode(params, config), sort_keys=True) + "\n"


def save(path: str | Path, params, config) -> None:
    Path(path).write_text(dumps(params, config), encoding="utf-8")


def load(path: str | Path):
    try:
        blob = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path}: line {e.lineno}: {e.msg}") from None
    return decode(blob)
