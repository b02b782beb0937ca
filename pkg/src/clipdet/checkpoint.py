"""Single-file parameter checkpoints.

Layout: one JSON header line mapping parameter name to ``{"shape": [...],
"offset": int}`` (offsets in bytes into the data section), a newline, then
the raw little-endian float64 buffers back to back. Saving the result of a
load reproduces the file byte for byte.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .autodiff import Tensor


class CheckpointError(ValueError):
    pass


def save_params(path, params: dict[str, Tensor | np.ndarray]) -> None:
    entries = {}
    blobs = []
    offset = 0
    for name in sorted(params):
        arr = params[name]
        data = arr.data if isinstance(arr, Tensor) else np.asarray(arr, dtype=np.float64)
        blob = np.ascontiguousarray(data, dtype="<f8").tobytes()
        entries[name] = {"shape": list(data.shape), "offset": offset}
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(entries, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(b"\n")
        for blob in blobs:
            fh.write(blob)


def load_params(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise CheckpointError(f"{path}: missing header line")
    try:
        entries = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointError(f"{path}: malformed header: {err}") from err
    data_section = raw[nl + 1:]
    out = {}
    for name, meta in entries.items():
        shape = tuple(int(n) for n in meta["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = int(meta["offset"])
        end = start + count * 8
        if end > len(data_section):
            raise CheckpointError(f"{path}: data for '{name}' extends past end of file")
        out[name] = np.frombuffer(data_section[start:end], dtype="<f8").reshape(shape).copy()
    return out


def assign_params(params: dict[str, Tensor], loaded: dict[str, np.ndarray]) -> None:
    """Copy loaded arrays into an existing parameter dict, checking shapes."""
    missing = sorted(set(params) - set(loaded))
    extra = sorted(set(loaded) - set(params))
    if missing or extra:
        raise CheckpointError(f"parameter names differ: missing={missing} unexpected={extra}")
    for name, p in params.items():
        if loaded[name].shape != p.data.shape:
            raise CheckpointError(
                f"'{name}': checkpoint shape {loaded[name].shape} != model shape {p.data.shape}"
            )
        p.data[...] = loaded[name]
