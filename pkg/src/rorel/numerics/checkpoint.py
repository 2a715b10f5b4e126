"""Binary checkpoint files.

Layout: 8 magic bytes ``RORCKPT1``, a little-endian uint64 header length, the
UTF-8 JSON header mapping parameter name -> {shape, dtype, offset}, then the
raw little-endian tensor payloads. Offsets are relative to the end of the
header. Round-trips are bit-exact for float64 parameters.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .tensor import Tensor

MAGIC = b"RORCKPT1"

_DTYPES = {"f8": "<f8", "f4": "<f4"}


class CheckpointError(ValueError):
    pass


def save_checkpoint(params: dict[str, Tensor], path, dtype: str = "f8") -> None:
    if dtype not in _DTYPES:
        raise CheckpointError(f"unsupported dtype {dtype!r}; use 'f8' or 'f4'")
    header: dict[str, dict] = {}
    payloads: list[bytes] = []
    offset = 0
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name].data, dtype=_DTYPES[dtype])
        raw = arr.tobytes()
        header[name] = {"shape": list(arr.shape), "dtype": dtype, "offset": offset}
        payloads.append(raw)
        offset += len(raw)
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for raw in payloads:
            fh.write(raw)


def load_checkpoint(path) -> dict[str, Tensor]:
    path = Path(path)
    blob = path.read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    (header_len,) = struct.unpack_from("<Q", blob, len(MAGIC))
    header_start = len(MAGIC) + 8
    header = json.loads(blob[header_start : header_start + header_len].decode("utf-8"))
    payload_start = header_start + header_len
    params: dict[str, Tensor] = {}
    for name, meta in header.items():
        np_dtype = _DTYPES.get(meta["dtype"])
        if np_dtype is None:
            raise CheckpointError(f"{path}: unknown dtype {meta['dtype']!r} for {name}")
        shape = tuple(meta["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = payload_start + meta["offset"]
        arr = np.frombuffer(blob, dtype=np_dtype, count=count, offset=start).reshape(shape)
        params[name] = Tensor(np.array(arr, dtype=np.float64), requires_grad=True)
    return params
