"""Versioned binary checkpoints.

Layout: magic bytes, format version, a JSON config echo, then named
float64 tensors (names sorted), all little-endian.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PMAECKPT"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, params: dict[str, np.ndarray], config_echo: dict) -> None:
    blob = json.dumps(config_echo, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<Q", len(params)))
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name], dtype="<f8")
            enc = name.encode()
            fh.write(struct.pack("<H", len(enc)))
            fh.write(enc)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    off = len(MAGIC)
    (version,) = struct.unpack_from("<I", data, off)
    off += 4
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (blob_len,) = struct.unpack_from("<Q", data, off)
    off += 8
    config_echo = json.loads(data[off : off + blob_len].decode())
    off += blob_len
    (count,) = struct.unpack_from("<Q", data, off)
    off += 8
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off : off + name_len].decode()
        off += name_len
        (ndim,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = []
        for _ in range(ndim):
            (dim,) = struct.unpack_from("<Q", data, off)
            off += 8
            shape.append(dim)
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(shape)
        off += size * 8
        params[name] = arr.astype(np.float64).copy()
    return params, config_echo
