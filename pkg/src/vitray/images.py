"""Grayscale image files and deterministic bilinear resizing.

PNG goes through Pillow; PGM (binary ``P5``) is handled directly so the
pipeline keeps a dependency-free fallback format. All reads yield 8-bit
2-D arrays.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError


def read_image(path) -> np.ndarray:
    """Load a grayscale image as a [H, W] uint8 array."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"image file not found: {path}")
    if path.suffix.lower() == ".pgm":
        return _read_pgm(path)
    with Image.open(path) as img:
        return np.asarray(img.convert("L"), dtype=np.uint8)


def write_image(path, pixels: np.ndarray) -> None:
    """Write a [H, W] uint8 array as PNG or PGM based on the suffix."""
    path = Path(path)
    pixels = np.asarray(pixels)
    if pixels.ndim != 2 or pixels.dtype != np.uint8:
        raise DataError(f"write_image needs a 2-D uint8 array, got {pixels.dtype} {pixels.shape}")
    if path.suffix.lower() == ".pgm":
        _write_pgm(path, pixels)
    else:
        Image.fromarray(pixels, mode="L").save(path, format="PNG")


def _read_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    # header = magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments allowed between them
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval
    if tokens[0] != b"P5":
        raise DataError(f"{path}: unsupported PGM magic {tokens[0]!r} (only binary P5)")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise DataError(f"{path}: only 8-bit PGM supported, maxval={maxval}")
    raster = data[pos:pos + width * height]
    if len(raster) != width * height:
        raise DataError(f"{path}: PGM raster truncated")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width)


def _write_pgm(path: Path, pixels: np.ndarray) -> None:
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear interpolation to [out_h, out_w].

    Source coordinate for output index i is i * (in - 1) / (out - 1), so the
    four image corners map exactly; an output extent of 1 samples index 0.
    Equal input and output sizes reproduce the input bit-exactly, and
    outputs never leave the input value range (convex combinations).
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    ys = np.linspace(0.0, h - 1.0, out_h) if out_h > 1 else np.zeros(1)
    xs = np.linspace(0.0, w - 1.0, out_w) if out_w > 1 else np.zeros(1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = img[np.ix_(y0, x0)] * (1 - wx) + img[np.ix_(y0, x1)] * wx
    bottom = img[np.ix_(y1, x0)] * (1 - wx) + img[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bottom * wy
