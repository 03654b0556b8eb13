"""Binary 8-bit PGM (P5) reading and writing.

All on-disk images in this project use this format: silhouette frames as
0/255 masks and GEIs as 8-bit grayscale.
"""

from __future__ import annotations

import numpy as np

from .errors import PgmFormatError


def write_pgm(path, pixels: np.ndarray) -> None:
    """Write a 2-D uint8 array as binary PGM with maxval 255."""
    arr = np.asarray(pixels)
    if arr.ndim != 2:
        raise PgmFormatError(f"PGM needs a 2-D array, got shape {arr.shape}")
    arr = arr.astype(np.uint8, copy=False)
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(arr.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM into a uint8 array of shape (height, width)."""
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P5"):
        raise PgmFormatError(f"{path}: not a binary P5 PGM")
    # Header is three whitespace-separated tokens after the magic; '#'
    # starts a comment that runs to end of line.
    pos = 2
    tokens = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise PgmFormatError(f"{path}: truncated header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte separates header from raster
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError as e:
        raise PgmFormatError(f"{path}: bad header token") from e
    if maxval != 255:
        raise PgmFormatError(f"{path}: only maxval 255 supported, got {maxval}")
    raster = data[pos : pos + w * h]
    if len(raster) != w * h:
        raise PgmFormatError(f"{path}: raster truncated ({len(raster)} of {w * h} bytes)")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()
