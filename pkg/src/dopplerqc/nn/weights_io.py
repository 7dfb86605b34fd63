"""Weight file format.

Layout (all integers little-endian):

    magic   4 bytes  b"DQCW"
    version u16      currently 1
    count   u32      number of tensors
    per tensor:
        name_len u16, name UTF-8
        rank     u8,  dims u32 * rank
        payload  f32 little-endian, row-major

Round trips are bit-exact at 32-bit precision.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import DataError

MAGIC = b"DQCW"
VERSION = 1


def save_weights(params: dict[str, np.ndarray]) -> bytes:
    out = [MAGIC, struct.pack("<HI", VERSION, len(params))]
    for name, tensor in params.items():
        enc = name.encode("utf-8")
        arr = np.ascontiguousarray(tensor, dtype="<f4")
        out.append(struct.pack("<H", len(enc)))
        out.append(enc)
        out.append(struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def load_weights(data: bytes) -> dict[str, np.ndarray]:
    if len(data) < 10:
        raise DataError("weights: file shorter than header")
    if data[0:4] != MAGIC:
        raise DataError(f"weights: bad magic {data[0:4]!r}, expected {MAGIC!r}")
    version, count = struct.unpack_from("<HI", data, 4)
    if version != VERSION:
        raise DataError(f"weights: unsupported version {version}, expected {VERSION}")
    pos = 10
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        if pos + 2 > len(data):
            raise DataError("weights: truncated tensor name length")
        (name_len,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + name_len].decode("utf-8")
        pos += name_len
        if pos + 1 > len(data):
            raise DataError(f"weights: truncated rank for tensor {name!r}")
        rank = data[pos]
        pos += 1
        if pos + 4 * rank > len(data):
            raise DataError(f"weights: truncated shape table for tensor {name!r}")
        dims = struct.unpack_from(f"<{rank}I", data, pos)
        pos += 4 * rank
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        nbytes = n * 4
        if pos + nbytes > len(data):
            raise DataError(
                f"weights: truncated payload for tensor {name!r} "
                f"(need {nbytes} bytes, {len(data) - pos} left)"
            )
        arr = np.frombuffer(data[pos:pos + nbytes], dtype="<f4").reshape(dims)
        pos += nbytes
        params[name] = arr.astype(np.float32)
    if pos != len(data):
        raise DataError(f"weights: {len(data) - pos} trailing bytes after shape table")
    return params


def save_weights_file(params: dict[str, np.ndarray], path) -> None:
    with open(path, "wb") as fh:
        fh.write(save_weights(params))


def load_weights_file(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return load_weights(fh.read())
