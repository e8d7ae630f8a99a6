"""Binary checkpoint container.

Layout (all integers little-endian):

    magic   4 bytes  b"UPSW"
    version u32      currently 1
    count   u32      number of entries
    entry := name_len u16, name bytes (UTF-8), rank u8,
             extent u32 * rank, values f32 * prod(extents)

Values are stored row-major as float32.  Entry order is preserved, so a
write/read round trip of the same mapping is byte-identical.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError

__all__ = ["write_checkpoint", "read_checkpoint", "MAGIC", "VERSION"]

MAGIC = b"UPSW"
VERSION = 1


def write_checkpoint(path, arrays: dict[str, np.ndarray]) -> None:
    path = Path(path)
    chunks = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name, arr in arrays.items():
        # asarray keeps rank 0; ascontiguousarray would promote it to rank 1
        arr = np.asarray(arr, dtype=np.float32)
        if arr.ndim and not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        name_b = name.encode("utf-8")
        if len(name_b) > 0xFFFF:
            raise CheckpointError(f"parameter name too long: {name[:40]}...")
        if arr.ndim > 0xFF:
            raise CheckpointError(f"rank {arr.ndim} exceeds format limit")
        chunks.append(struct.pack("<H", len(name_b)))
        chunks.append(name_b)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype("<f4").tobytes())
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    tmp.replace(path)


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def read(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated checkpoint: {self.path}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.read(struct.calcsize(fmt)))


def read_checkpoint(path) -> dict[str, np.ndarray]:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    r = _Reader(buf, path)
    if r.read(4) != MAGIC:
        raise CheckpointError(f"not a checkpoint file (bad magic): {path}")
    version, count = r.unpack("<II")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        try:
            name = r.read(name_len).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointError(f"corrupt parameter name in {path}") from e
        (rank,) = r.unpack("<B")
        shape = r.unpack(f"<{rank}I") if rank else ()
        n = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(r.read(4 * n), dtype="<f4").reshape(shape)
        out[name] = data.astype(np.float32)
    if r.pos != len(buf):
        raise CheckpointError(f"trailing bytes after last entry in {path}")
    return out
