"""LRCK named-tensor checkpoint files (float32 payloads)."""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

LRCK_MAGIC = b"LRCK"
LRCK_VERSION = 1
DTYPE_F32 = 0


class CheckpointError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def dumps(tensors: Mapping[str, np.ndarray]) -> bytes:
    parts = [LRCK_MAGIC, struct.pack("<II", LRCK_VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"tensor name too long: {name[:40]}...")
        if arr.ndim > 0xFF:
            raise ValueError(f"tensor {name!r} has too many dimensions")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<BB", DTYPE_F32, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def loads(data: bytes) -> dict[str, np.ndarray]:
    if data[:4] != LRCK_MAGIC:
        raise CheckpointError(f"bad checkpoint magic {data[:4]!r}, expected {LRCK_MAGIC!r}", 0)
    pos = 4

    def take(fmt: str):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise CheckpointError("truncated checkpoint", pos)
        vals = struct.unpack_from(fmt, data, pos)
        pos += size
        return vals

    version, count = take("<II")
    if version != LRCK_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}", 4)
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = take("<H")
        if pos + name_len > len(data):
            raise CheckpointError("truncated tensor name", pos)
        name = data[pos : pos + name_len].decode("utf-8")
        pos += name_len
        dtype_tag, ndim = take("<BB")
        if dtype_tag != DTYPE_F32:
            raise CheckpointError(f"unknown dtype tag {dtype_tag} for {name!r}", pos - 2)
        dims = take(f"<{ndim}I")
        nbytes = 4 * int(np.prod(dims, dtype=np.int64))
        if pos + nbytes > len(data):
            raise CheckpointError(f"truncated payload for {name!r}", pos)
        out[name] = np.frombuffer(data, dtype="<f4", count=nbytes // 4, offset=pos).reshape(dims).copy()
        pos += nbytes
    if pos != len(data):
        raise CheckpointError("trailing bytes after last tensor", pos)
    return out


def save_checkpoint(path, tensors: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(tensors))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())
