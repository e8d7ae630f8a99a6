"""Image file I/O: PFM float maps and PNG masks/previews.

Both formats are implemented directly on the standard library so that a
fixed input produces byte-identical files on every platform.  PFM files are
written little-endian (scale -1.0) with rows bottom-to-top, per the format's
convention; arrays in memory are always top-to-bottom.  PNG writing always
uses filter type 0 and a fixed zlib level; the reader additionally handles
filters 1-4 and 8/16-bit gray/RGB/RGBA from other tools.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import UnipsError

__all__ = ["read_pfm", "write_pfm", "read_png", "write_png", "read_mask", "write_mask"]


class ImageFormatError(UnipsError, ValueError):
    pass


# -- PFM --------------------------------------------------------------------------


def write_pfm(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim == 3 and arr.shape[2] == 3:
        header = b"PF"
    elif arr.ndim == 2:
        header = b"Pf"
    else:
        raise ImageFormatError(f"PFM needs (h, w) or (h, w, 3), got {arr.shape}")
    h, w = arr.shape[:2]
    body = np.flipud(arr).astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header + b"\n")
        fh.write(f"{w} {h}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(body)


def _pfm_token(fh) -> bytes:
    tok = b""
    while True:
        ch = fh.read(1)
        if not ch:
            raise ImageFormatError("truncated PFM header")
        if ch in b" \t\r\n":
            if tok:
                return tok
            continue
        tok += ch


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        kind = _pfm_token(fh)
        if kind not in (b"PF", b"Pf"):
            raise ImageFormatError(f"not a PFM file: {path}")
        w = int(_pfm_token(fh))
        h = int(_pfm_token(fh))
        scale = float(_pfm_token(fh))
        channels = 3 if kind == b"PF" else 1
        count = w * h * channels
        data = fh.read(4 * count)
        if len(data) < 4 * count:
            raise ImageFormatError(f"truncated PFM data: {path}")
    dtype = "<f4" if scale < 0 else ">f4"
    arr = np.frombuffer(data, dtype=dtype).astype(np.float32)
    arr = arr.reshape(h, w, channels) if channels == 3 else arr.reshape(h, w)
    if abs(scale) not in (0.0, 1.0):
        arr = arr * abs(scale)
    return np.flipud(arr).copy()


# -- PNG --------------------------------------------------------------------------


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return (struct.pack(">I", len(payload)) + tag + payload
            + struct.pack(">I", zlib.crc32(tag + payload)))


def write_png(path, arr: np.ndarray) -> None:
    """Write 8-bit gray/RGB or 16-bit RGB PNG (filter 0, fixed compression)."""
    arr = np.asarray(arr)
    if arr.dtype == np.uint8:
        depth = 8
    elif arr.dtype == np.uint16:
        depth = 16
    else:
        raise ImageFormatError(f"PNG writer takes uint8 or uint16, got {arr.dtype}")
    if arr.ndim == 2:
        color_type = 0
        raw = arr[:, :, None]
    elif arr.ndim == 3 and arr.shape[2] == 3:
        color_type = 2
        raw = arr
    else:
        raise ImageFormatError(f"PNG writer takes (h, w) or (h, w, 3), got {arr.shape}")
    h, w = arr.shape[:2]
    if depth == 16:
        rows = raw.astype(">u2").tobytes()
        stride = w * raw.shape[2] * 2
    else:
        rows = raw.tobytes()
        stride = w * raw.shape[2]
    scan = b"".join(
        b"\x00" + rows[y * stride:(y + 1) * stride] for y in range(h)
    )
    ihdr = struct.pack(">IIBBBBB", w, h, depth, color_type, 0, 0, 0)
    blob = (b"\x89PNG\r\n\x1a\n"
            + _chunk(b"IHDR", ihdr)
            + _chunk(b"IDAT", zlib.compress(scan, 6))
            + _chunk(b"IEND", b""))
    Path(path).write_bytes(blob)


def _unfilter(kind: int, row: np.ndarray, prev: np.ndarray, bpp: int) -> np.ndarray:
    if kind == 0:
        return row
    if kind == 2:
        return (row.astype(np.int32) + prev) % 256
    if kind == 1:
        out = row.astype(np.int64)
        for o in range(bpp):
            out[o::bpp] = np.cumsum(out[o::bpp]) % 256
        return out
    out = np.zeros_like(row, dtype=np.int32)
    for i in range(len(row)):
        a = out[i - bpp] if i >= bpp else 0
        b = int(prev[i])
        if kind == 3:
            out[i] = (int(row[i]) + (a + b) // 2) % 256
        elif kind == 4:
            c = int(prev[i - bpp]) if i >= bpp else 0
            p = a + b - c
            pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
            pred = a if (pa <= pb and pa <= pc) else (b if pb <= pc else c)
            out[i] = (int(row[i]) + pred) % 256
        else:
            raise ImageFormatError(f"unknown PNG filter type {kind}")
    return out


def read_png(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if buf[:8] != b"\x89PNG\r\n\x1a\n":
        raise ImageFormatError(f"not a PNG file: {path}")
    pos = 8
    ihdr = None
    idat = b""
    while pos + 8 <= len(buf):
        (length,) = struct.unpack(">I", buf[pos:pos + 4])
        tag = buf[pos + 4:pos + 8]
        if pos + 12 + length > len(buf):
            raise ImageFormatError(f"truncated PNG chunk {tag!r}: {path}")
        payload = buf[pos + 8:pos + 8 + length]
        (crc,) = struct.unpack(">I", buf[pos + 8 + length:pos + 12 + length])
        if crc != zlib.crc32(tag + payload):
            raise ImageFormatError(f"PNG chunk {tag!r} CRC mismatch: {path}")
        pos += 12 + length
        if tag == b"IHDR":
            ihdr = struct.unpack(">IIBBBBB", payload)
        elif tag == b"IDAT":
            idat += payload
        elif tag == b"IEND":
            break
    if ihdr is None:
        raise ImageFormatError(f"PNG missing IHDR: {path}")
    w, h, depth, color_type, _, _, interlace = ihdr
    if interlace:
        raise ImageFormatError("interlaced PNG is not supported")
    channels = {0: 1, 2: 3, 4: 2, 6: 4}.get(color_type)
    if channels is None:
        raise ImageFormatError(f"unsupported PNG color type {color_type}")
    if depth not in (8, 16):
        raise ImageFormatError(f"unsupported PNG bit depth {depth}")
    try:
        data = zlib.decompress(idat)
    except zlib.error as exc:
        raise ImageFormatError(f"corrupt PNG pixel data: {exc}") from None
    bpp = channels * depth // 8
    stride = w * bpp
    if len(data) < h * (stride + 1):
        raise ImageFormatError(f"PNG pixel data too short: {path}")
    out = np.zeros((h, stride), dtype=np.int32)
    prev = np.zeros(stride, dtype=np.int32)
    for y in range(h):
        off = y * (stride + 1)
        kind = data[off]
        row = np.frombuffer(data, dtype=np.uint8, count=stride, offset=off + 1)
        prev = _unfilter(kind, row, prev, bpp)
        out[y] = prev
    bytes_out = out.astype(np.uint8)
    if depth == 16:
        arr = bytes_out.reshape(h, w, channels, 2)
        arr = (arr[..., 0].astype(np.uint16) << 8) | arr[..., 1]
    else:
        arr = bytes_out.reshape(h, w, channels)
    return arr[:, :, 0] if channels == 1 else arr


# -- binary masks -----------------------------------------------------------------


def write_mask(path, mask: np.ndarray) -> None:
    mask = np.asarray(mask)
    write_png(path, np.where(mask, 255, 0).astype(np.uint8))


def read_mask(path) -> np.ndarray:
    arr = read_png(path)
    if arr.ndim == 3:
        arr = arr[:, :, 0]
    return arr > (127 * 257 if arr.dtype == np.uint16 else 127)
