"""Checkpoint files: versioned JSON text, one entry per named parameter.

    {"format": "hamh-checkpoint", "version": 1, "meta": {...},
     "params": [{"name": "actor.embed.W_d", "shape": [12, 128], "data": [...]}, ...]}

``data`` is the row-major flattening; floats are written with ``repr`` so
they round-trip exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .tensor import Tensor

FORMAT = "hamh-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: dict[str, Tensor], meta: dict | None = None) -> None:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "meta": meta or {},
        "params": [
            {"name": name, "shape": list(p.shape), "data": p.data.reshape(-1).tolist()}
            for name, p in params.items()
        ],
    }
    Path(path).write_text(json.dumps(doc))


def read_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != FORMAT:
        raise CheckpointError(f"{path}: not a {FORMAT} file")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported version {doc.get('version')}")
    arrays = {}
    for entry in doc["params"]:
        shape = tuple(entry["shape"])
        data = np.asarray(entry["data"], dtype=np.float64)
        if data.size != int(np.prod(shape, dtype=np.int64)):
            raise CheckpointError(f"{entry['name']}: {data.size} values for shape {shape}")
        arrays[entry["name"]] = data.reshape(shape)
    return arrays, doc.get("meta", {})


def load_checkpoint(path, params: dict[str, Tensor]) -> dict:
    """Copy stored values into ``params`` in place; returns the metadata."""
    arrays, meta = read_checkpoint(path)
    missing = [n for n in params if n not in arrays]
    if missing:
        raise CheckpointError(f"checkpoint lacks parameters: {missing[:5]}")
    for name, p in params.items():
        a = arrays[name]
        if a.shape != p.shape:
            raise CheckpointError(f"{name}: checkpoint shape {a.shape} != parameter shape {p.shape}")
    for name, p in params.items():
        p.data[...] = arrays[name]
    return meta
