"""Raw binary array storage: ``<name>.f32`` + ``<name>.json`` sidecar.

The on-disk format is deliberately primitive so that converters for public
datasets can be written in any language: a flat little-endian binary blob plus
a JSON sidecar declaring dtype, shape, and memory order.  Example sidecar::

    {"dtype": "float32", "shape": [1200, 1024], "order": "C"}

Float32 row-major is the canonical format for neural data and checkpoints;
int dtypes are supported for auxiliary arrays (labels, counters).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

ARRAY_SUFFIX = ".f32"

_DTYPES = {
    "float32": np.dtype("<f4"),
    "float64": np.dtype("<f8"),
    "int64": np.dtype("<i8"),
    "int32": np.dtype("<i4"),
}


class ArrayFormatError(ValueError):
    """Sidecar/blob mismatch or unsupported declaration."""


def sidecar_path(array_path: str | Path) -> Path:
    return Path(array_path).with_suffix(".json")


def write_array(array_path: str | Path, data: np.ndarray) -> Path:
    """Write ``data`` to ``array_path`` (.f32 blob) with its JSON sidecar.

    Data is converted to little-endian; float inputs are stored as float32
    unless already float64, integers as int64/int32 matching their width.
    """
    array_path = Path(array_path)
    if array_path.suffix != ARRAY_SUFFIX:
        array_path = array_path.with_suffix(ARRAY_SUFFIX)
    arr = np.asarray(data)
    if arr.dtype.kind == "f":
        name = "float64" if arr.dtype == np.float64 else "float32"
    elif arr.dtype.kind in "iu":
        name = "int32" if arr.dtype.itemsize <= 4 else "int64"
    else:
        raise ArrayFormatError(f"unsupported dtype {arr.dtype} for {array_path}")
    arr = np.ascontiguousarray(arr, dtype=_DTYPES[name])
    array_path.parent.mkdir(parents=True, exist_ok=True)
    array_path.write_bytes(arr.tobytes(order="C"))
    sidecar = {"dtype": name, "shape": list(arr.shape), "order": "C"}
    sidecar_path(array_path).write_text(json.dumps(sidecar) + "\n")
    return array_path


def read_array(array_path: str | Path) -> np.ndarray:
    """Read an array written by :func:`write_array`.

    Raises FileNotFoundError naming the missing path, and ArrayFormatError
    when the declared shape does not match the blob's byte length.
    """
    array_path = Path(array_path)
    side = sidecar_path(array_path)
    if not array_path.exists():
        raise FileNotFoundError(f"array file not found: {array_path}")
    if not side.exists():
        raise FileNotFoundError(f"array sidecar not found: {side}")
    meta = json.loads(side.read_text())
    for key in ("dtype", "shape", "order"):
        if key not in meta:
            raise ArrayFormatError(f"sidecar {side} missing field '{key}'")
    if meta["dtype"] not in _DTYPES:
        raise ArrayFormatError(f"sidecar {side}: unsupported dtype '{meta['dtype']}'")
    if meta["order"] != "C":
        raise ArrayFormatError(f"sidecar {side}: only C order is supported")
    dtype = _DTYPES[meta["dtype"]]
    shape = tuple(int(s) for s in meta["shape"])
    expected = int(np.prod(shape)) * dtype.itemsize if shape else dtype.itemsize
    blob = array_path.read_bytes()
    if len(blob) != expected:
        raise ArrayFormatError(
            f"{array_path}: declared shape {list(shape)} ({expected} bytes) "
            f"does not match file size {len(blob)} bytes"
        )
    return np.frombuffer(blob, dtype=dtype).reshape(shape).copy()


def write_array_bundle(directory: str | Path, arrays: dict[str, np.ndarray]) -> Path:
    """Write a named collection of arrays into ``directory``.

    Each entry becomes ``<idx>.f32``/``<idx>.json``; an ``index.json`` maps
    logical names (which may contain characters unfit for filenames, such as
    dots in parameter paths) to file stems, preserving insertion order.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = {}
    for i, (name, arr) in enumerate(arrays.items()):
        stem = f"{i:04d}"
        write_array(directory / f"{stem}{ARRAY_SUFFIX}", arr)
        index[name] = stem
    (directory / "index.json").write_text(json.dumps(index, indent=1) + "\n")
    return directory


def read_array_bundle(directory: str | Path) -> dict[str, np.ndarray]:
    directory = Path(directory)
    index_path = directory / "index.json"
    if not index_path.exists():
        raise FileNotFoundError(f"array bundle index not found: {index_path}")
    index = json.loads(index_path.read_text())
    return {
        name: read_array(directory / f"{stem}{ARRAY_SUFFIX}")
        for name, stem in index.items()
    }


def atomic_write_text(path: str | Path, text: str) -> Path:
    """Write text via a temporary sibling and rename, so readers never see
    a partially written file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)
    return path


def atomic_write_json(path: str | Path, payload) -> Path:
    """Atomically write a JSON document with sorted keys and a trailing newline."""
    return atomic_write_text(path, json.dumps(payload, indent=1, sort_keys=True) + "\n")
