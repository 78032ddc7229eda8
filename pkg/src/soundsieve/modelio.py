"""Line-oriented text persistence for trained models.

Format: a header line, `meta key value` lines, then per tensor an
`array name dim0 dim1 ...` line followed by one weight per line written
with repr (shortest round-tripping decimal), so a saved model reloads
bit-identically.
"""

from __future__ import annotations

import numpy as np

MAGIC = "soundsieve-model 1"


def save_arrays(path, kind: str, meta: dict, arrays: dict) -> None:
    with open(path, "w") as fh:
        fh.write(f"{MAGIC}\n")
        fh.write(f"kind {kind}\n")
        for key, value in meta.items():
            fh.write(f"meta {key} {value}\n")
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype=np.float64)
            dims = " ".join(str(d) for d in arr.shape) if arr.ndim else "scalar"
            fh.write(f"array {name} {dims}\n")
            for value in arr.ravel():
                fh.write(repr(float(value)) + "\n")


def load_arrays(path):
    """Returns (kind, meta: dict[str, str], arrays: dict[str, ndarray])."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != MAGIC:
        raise ValueError(f"{path}: not a {MAGIC!r} file")
    if len(lines) < 2 or not lines[1].startswith("kind "):
        raise ValueError(f"{path}: missing model kind")
    kind = lines[1].split(" ", 1)[1]
    meta = {}
    arrays = {}
    i = 2
    while i < len(lines):
        line = lines[i]
        if line.startswith("meta "):
            _, key, value = line.split(" ", 2)
            meta[key] = value
            i += 1
        elif line.startswith("array "):
            parts = line.split(" ")
            name = parts[1]
            shape = () if parts[2:] == ["scalar"] else tuple(int(d) for d in parts[2:])
            count = int(np.prod(shape)) if shape else 1
            values = np.array([float(v) for v in lines[i + 1 : i + 1 + count]])
            if values.size != count:
                raise ValueError(f"{path}: truncated array {name!r}")
            arrays[name] = values.reshape(shape) if shape else values[0]
            i += 1 + count
        elif not line.strip():
            i += 1
        else:
            raise ValueError(f"{path}: unrecognised line {line!r}")
    return kind, meta, arrays
