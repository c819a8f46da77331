"""Netpbm images: PPM color, PGM gray (8 or 16 bit). Reads P2/P3/P5/P6, writes ASCII by default."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from ..errors import FormatError

_CHANNELS = {b"P2": 1, b"P3": 3, b"P5": 1, b"P6": 3}


def _tokens(buf: bytes, count: int, pos: int) -> tuple[list[int], int]:
    """``count`` whitespace-separated integers starting at ``pos``, skipping ``#`` comments."""
    out: list[int] = []
    n = len(buf)
    while len(out) < count:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated netpbm header")
        try:
            out.append(int(buf[start:pos]))
        except ValueError as e:
            raise FormatError(f"bad netpbm token {buf[start:pos][:16]!r}") from e
    return out, pos


def decode_netpbm(buf: bytes) -> NDArray:
    """Decode bytes into (H, W) or (H, W, 3); uint8 for maxval < 256, else uint16."""
    magic = buf[:2]
    if magic not in _CHANNELS:
        raise FormatError(f"not a P2/P3/P5/P6 netpbm image (magic {magic!r})")
    ch = _CHANNELS[magic]
    (w, h, maxval), pos = _tokens(buf, 3, 2)
    if w <= 0 or h <= 0 or not 0 < maxval < 65536:
        raise FormatError(f"invalid netpbm header {w}x{h} maxval {maxval}")
    dtype = np.uint8 if maxval < 256 else np.uint16
    n = w * h * ch
    if magic in (b"P2", b"P3"):
        vals = buf[pos:].split()
        if len(vals) < n:
            raise FormatError(f"expected {n} samples, found {len(vals)}")
        data = np.array(vals[:n], dtype=np.int64)
    else:
        pos += 1  # single whitespace after maxval
        width = 1 if dtype == np.uint8 else 2
        raw = buf[pos:pos + n * width]
        if len(raw) < n * width:
            raise FormatError("truncated netpbm raster")
        data = np.frombuffer(raw, dtype=">u2" if width == 2 else np.uint8).astype(np.int64)
    if data.min(initial=0) < 0 or data.max(initial=0) > maxval:
        raise FormatError("sample outside [0, maxval]")
    img = data.astype(dtype).reshape(h, w, ch)
    return img[:, :, 0] if ch == 1 else img


def encode_netpbm(img: NDArray, binary: bool = False, maxval: int | None = None) -> bytes:
    a = np.asarray(img)
    if a.ndim == 3 and a.shape[2] == 3:
        magic = b"P6" if binary else b"P3"
    elif a.ndim == 2:
        magic = b"P5" if binary else b"P2"
    else:
        raise FormatError(f"cannot encode image of shape {a.shape}")
    if a.dtype not in (np.uint8, np.uint16):
        raise FormatError(f"netpbm needs uint8 or uint16 samples, got {a.dtype}")
    if maxval is None:
        maxval = 255 if a.dtype == np.uint8 else 65535
    if int(a.max(initial=0)) > maxval:
        raise FormatError("sample exceeds maxval")
    h, w = a.shape[:2]
    head = b"%s\n%d %d\n%d\n" % (magic, w, h, maxval)
    if binary:
        return head + a.astype(">u2" if maxval > 255 else np.uint8).tobytes()
    rows = a.reshape(h, -1)
    body = "\n".join(" ".join(map(str, r)) for r in rows.tolist())
    return head + body.encode() + b"\n"


def read_netpbm(path) -> NDArray:
    p = Path(path)
    try:
        buf = p.read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read {p}: {e.strerror}") from e
    try:
        return decode_netpbm(buf)
    except FormatError as e:
        raise FormatError(f"{p}: {e}") from e


def write_netpbm(path, img: NDArray, binary: bool = False) -> None:
    Path(path).write_bytes(encode_netpbm(img, binary))


def read_ppm(path) -> NDArray[np.uint8]:
    img = read_netpbm(path)
    if img.ndim != 3 or img.dtype != np.uint8:
        raise FormatError(f"{path}: expected an 8-bit color PPM")
    return img


def read_pgm(path) -> NDArray:
    img = read_netpbm(path)
    if img.ndim != 2:
        raise FormatError(f"{path}: expected a gray PGM")
    return img


def write_depth_pgm(path, depth_mm: NDArray, binary: bool = False) -> None:
    """Depth in millimeters as a 16-bit PGM (0 = invalid)."""
    write_netpbm(path, np.asarray(depth_mm, dtype=np.uint16), binary)


def read_depth_pgm(path) -> NDArray[np.uint16]:
    return read_pgm(path).astype(np.uint16)


def write_mask_pgm(path, mask: NDArray, binary: bool = False) -> None:
    write_netpbm(path, np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8), binary)


def read_mask_pgm(path) -> NDArray[np.bool_]:
    return read_pgm(path) > 0
