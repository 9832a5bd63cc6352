"""Flat binary checkpoint of named float64 tensors.

Layout, all little-endian:

    magic   4 bytes  "MMNT"
    version u16      currently 1
    count   u32      number of named tensors
    per tensor:
        name_len u16, name UTF-8 bytes
        rank     u8,  dims u32 each
        data     float64, C order

Tensors are written sorted by name, so identical parameter dicts always
produce identical bytes; loading rejects bad magic, truncation and
trailing garbage.
"""

from __future__ import annotations

import struct

import numpy as np

from .tensor import Tensor

MAGIC = b"MMNT"
VERSION = 1


def save_checkpoint(path, tensors) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(tensors)))
        for name in sorted(tensors):
            value = tensors[name]
            data = np.asarray(value.data if isinstance(value, Tensor) else value,
                              dtype=np.float64)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.astype("<f8", copy=False).tobytes(order="C"))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ValueError("bad magic")
    offset = 4

    def take(count: int) -> bytes:
        nonlocal offset
        if offset + count > len(blob):
            raise ValueError("truncated checkpoint")
        piece = blob[offset:offset + count]
        offset += count
        return piece

    version, count = struct.unpack("<HI", take(6))
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        data = np.frombuffer(take(8 * size), dtype="<f8").reshape(dims)
        out[name] = data.astype(np.float64).copy()
    if offset != len(blob):
        raise ValueError("trailing garbage after checkpoint payload")
    return out
