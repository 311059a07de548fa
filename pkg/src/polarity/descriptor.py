"""JSON interchange for catalog functions, grid functions and time paths.

A descriptor is either

    {"kind": "analytic", "expr": {...catalog tree...}, "grid": {"box": ..., "shape": ...}}

where "grid" is optional and says where to sample, or

    {"kind": "grid", "dim": n, "box": [[lo, hi], ...], "shape": [...],
     "values": [...], "inf": "inf"}

with +inf values written as the "inf" token. Floats go through ``repr`` so a
save/load round trip is exact.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .funcspace.catalog import AnalyticConvexFunction, from_dict
from .funcspace.grid import GridFunction, sample

INF_TOKEN = "inf"


def atomic_write(path, text: str) -> None:
    """Write via a temp file in the same directory and rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _encode_values(values: np.ndarray) -> list:
    return [INF_TOKEN if math.isinf(v) else float(v) for v in np.asarray(values, dtype=float).ravel()]


def _decode_values(raw, token: str) -> np.ndarray:
    return np.array([math.inf if v == token else float(v) for v in raw], dtype=float)


def to_descriptor(obj, *, grid=None, extra: dict | None = None) -> dict:
    """Descriptor dict for a catalog function or a grid function.

    ``grid`` (box, shape) is recorded with analytic functions as the
    default sampling lattice. ``extra`` keys are merged in (e.g. "argmax").
    """
    if isinstance(obj, GridFunction):
        d = {
            "kind": "grid",
            "dim": obj.dim,
            "box": [list(b) for b in obj.box],
            "shape": list(obj.shape),
            "values": _encode_values(obj.values),
            "inf": INF_TOKEN,
        }
    elif isinstance(obj, AnalyticConvexFunction):
        d = {"kind": "analytic", "expr": obj.to_dict()}
        if grid is not None:
            box, shape = grid
            d["grid"] = {"box": [list(map(float, b)) for b in box], "shape": [int(s) for s in shape]}
    else:
        raise TypeError(f"cannot describe {type(obj).__name__}")
    if extra:
        d.update(extra)
    return d


def from_descriptor(d: dict):
    """Catalog function or GridFunction; analytic ones carry their lattice in ``.grid`` if given."""
    kind = d.get("kind")
    if kind == "grid":
        token = d.get("inf", INF_TOKEN)
        shape = tuple(int(s) for s in d["shape"])
        box = tuple((float(lo), float(hi)) for lo, hi in d["box"])
        if "dim" in d and int(d["dim"]) != len(shape):
            raise ValueError("dim disagrees with shape")
        values = _decode_values(d["values"], token)
        if values.size != int(np.prod(shape)):
            raise ValueError(f"{values.size} values for shape {shape}")
        return GridFunction(box, shape, values.reshape(shape))
    if kind == "analytic":
        return from_dict(d["expr"])
    raise ValueError(f"unknown descriptor kind {kind!r}")


def descriptor_lattice(d: dict):
    """(box, shape) recorded in a descriptor, or None."""
    if d.get("kind") == "grid":
        return [tuple(b) for b in d["box"]], tuple(d["shape"])
    g = d.get("grid")
    if g:
        return [tuple(b) for b in g["box"]], tuple(g["shape"])
    return None


def dumps(d: dict) -> str:
    return json.dumps(d, indent=1, allow_nan=False) + "\n"


def load(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def save(obj, path, **kw) -> None:
    atomic_write(path, dumps(to_descriptor(obj, **kw)))


def load_grid(path, box=None, shape=None) -> GridFunction:
    """Load a descriptor as a grid, sampling analytic ones on (box, shape) or their recorded lattice."""
    d = load(path)
    f = from_descriptor(d)
    if isinstance(f, GridFunction):
        return f
    lattice = (box, shape) if box is not None else descriptor_lattice(d)
    if lattice is None or lattice[0] is None:
        raise ValueError(f"{path}: analytic descriptor without a lattice; pass a box and shape")
    return sample(f, *lattice)
