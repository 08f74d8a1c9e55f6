"""Versioned binary checkpoint files.

Layout (little-endian): magic "AOVC", version u8, tensor count u32, then
per tensor: name_len u16, UTF-8 name, rank u8, dims u32 each, float32 data.
Optimizer state rides along as extra tensors under the "adam." prefix.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"AOVC"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_tensors(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    chunks = [MAGIC, struct.pack("<BI", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype=np.float32)
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes(order="C"))
    Path(path).write_bytes(b"".join(chunks))


def load_tensors(path: str | Path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {buf[:4]!r}")
    version, count = struct.unpack_from("<BI", buf, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    offset = 9
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", buf, offset)
        offset += 2
        name = buf[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<B", buf, offset)
        offset += 1
        dims = struct.unpack_from(f"<{rank}I", buf, offset)
        offset += 4 * rank
        n_items = int(np.prod(dims)) if rank else 1
        end = offset + 4 * n_items
        if end > len(buf):
            raise CheckpointError(f"{path}: truncated tensor '{name}'")
        data = np.frombuffer(buf[offset:end], dtype="<f4").reshape(dims)
        offset = end
        out[name] = data.copy()
    return out
