"""Single-file binary container: versioned header + named array payloads.

Layout: magic ``GAPC``, uint32 version, uint64 header length, JSON header
(``meta`` dict plus ordered tensor descriptors with name/shape/dtype), then
the raw little-endian payloads concatenated in header order. Parameters are
always float64; integer arrays (dataset caches) use int64.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"GAPC"
VERSION = 1
_DTYPES = {"f8": "<f8", "i8": "<i8"}


def write_container(path, meta: dict, tensors: dict[str, np.ndarray]) -> None:
    descriptors = []
    payloads = []
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.dtype.kind == "f":
            code, arr = "f8", arr.astype("<f8")
        elif arr.dtype.kind in "iub":
            code, arr = "i8", arr.astype("<i8")
        else:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for {name!r}")
        descriptors.append({"name": name, "shape": list(arr.shape), "dtype": code})
        payloads.append(arr.tobytes(order="C"))
    header = json.dumps({"meta": meta, "tensors": descriptors},
                        sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for blob in payloads:
            f.write(blob)


def read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"no such file: {path}")
    raw = path.read_bytes()
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a container file (bad magic)")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != VERSION:
        raise CheckpointError(f"unsupported container version {version}")
    (header_len,) = struct.unpack("<Q", raw[8:16])
    if len(raw) < 16 + header_len:
        raise CheckpointError(f"{path} is truncated (header)")
    try:
        header = json.loads(raw[16:16 + header_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path} has a corrupt header: {exc}") from exc
    tensors = {}
    offset = 16 + header_len
    for desc in header["tensors"]:
        shape = tuple(desc["shape"])
        dtype = np.dtype(_DTYPES[desc["dtype"]])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * dtype.itemsize
        if offset + nbytes > len(raw):
            raise CheckpointError(f"{path} is truncated (payload {desc['name']!r})")
        arr = np.frombuffer(raw, dtype=dtype, count=count,
                            offset=offset).reshape(shape).copy()
        tensors[desc["name"]] = arr
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path} has {len(raw) - offset} trailing bytes")
    return header["meta"], tensors
