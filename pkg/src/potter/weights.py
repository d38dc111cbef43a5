"""POTW binary tensor container.

Layout (little-endian)::

    b"POTW"  u32 version=1  u32 count
    repeated count times:
        u16 name_len  name (UTF-8)  u8 rank  u64 extents[rank]  f64 values[prod(extents)]
"""
from __future__ import annotations

import io
import math
import struct

import numpy as np

MAGIC = b"POTW"
VERSION = 1


class PotwFormatError(ValueError):
    pass


def dumps(tensors: dict) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(tensors)))
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8", order="C")
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF or arr.ndim > 0xFF:
            raise ValueError(f"tensor {name!r} cannot be encoded")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes(order="C"))
    return buf.getvalue()


def loads(blob: bytes) -> dict:
    view = memoryview(blob)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise PotwFormatError("truncated POTW data")
        out = view[pos:pos + n]
        pos += n
        return out

    if bytes(take(4)) != MAGIC:
        raise PotwFormatError("bad magic: not a POTW file")
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise PotwFormatError(f"unsupported POTW version {version}")
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        try:
            name = bytes(take(nlen)).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise PotwFormatError("tensor name is not UTF-8") from exc
        (rank,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{rank}Q", take(8 * rank))
        n = math.prod(shape)
        arr = np.frombuffer(take(8 * n), dtype="<f8").astype(np.float64).reshape(shape)
        if name in out:
            raise PotwFormatError(f"duplicate tensor name {name!r}")
        out[name] = arr
    if pos != len(view):
        raise PotwFormatError(f"{len(view) - pos} trailing bytes after last tensor")
    return out


def save(path, tensors: dict):
    with open(path, "wb") as fh:
        fh.write(dumps(tensors))


def load(path) -> dict:
    with open(path, "rb") as fh:
        return loads(fh.read())


def save_tensor(path, arr, name="tensor"):
    save(path, {name: arr})


def load_tensor(path):
    tensors = load(path)
    if len(tensors) != 1:
        raise PotwFormatError(f"expected a single-tensor file, found {len(tensors)} tensors")
    return next(iter(tensors.values()))
