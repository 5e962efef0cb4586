"""Binary PGM (P5) reading and writing, 8 and 16 bit.

Images are exchanged as float arrays scaled to ``[0, 1]``.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["read_pgm", "write_pgm"]


def _tokens(data: bytes, count: int):
    """First ``count`` header tokens and the offset just past the last one."""
    out, i, n = [], 0, len(data)
    while len(out) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < n and not data[j : j + 1].isspace():
            j += 1
        if j == i:
            raise ValueError("truncated PGM header")
        out.append(data[i:j])
        i = j
    # exactly one whitespace byte separates the header from the raster
    return out, i + 1


def read_pgm(path) -> np.ndarray:
    """Read a P5 file into a float array in ``[0, 1]``."""
    with open(path, "rb") as fh:
        data = fh.read()
    toks, off = _tokens(data, 4)
    if toks[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {toks[0]!r})")
    try:
        w, h, maxval = (int(t) for t in toks[1:])
    except ValueError:
        raise ValueError(f"{path}: malformed PGM header") from None
    if w <= 0 or h <= 0 or not 0 < maxval < 65536:
        raise ValueError(f"{path}: invalid PGM dimensions or maxval")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    size = w * h * dtype.itemsize
    raster = data[off : off + size]
    if len(raster) != size:
        raise ValueError(f"{path}: raster has {len(raster)} bytes, expected {size}")
    return np.frombuffer(raster, dtype=dtype).reshape(h, w).astype(float) / maxval


def write_pgm(path, img, bits: int = 8) -> None:
    """Write ``img`` (values clipped to ``[0, 1]``) as an 8- or 16-bit P5 file."""
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ValueError("expected a 2-D image")
    maxval = 255 if bits == 8 else 65535
    q = np.rint(np.clip(np.nan_to_num(img), 0.0, 1.0) * maxval)
    raster = q.astype(">u2" if bits == 16 else "u1").tobytes()
    h, w = img.shape
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"P5\n%d %d\n%d\n" % (w, h, maxval))
        fh.write(raster)
    os.replace(tmp, path)
