"""Input validation helpers for the array-facing estimator API."""

from __future__ import annotations

import numpy as np

from .errors import DataError, ShapeError


def check_images(X, image_size: int, in_channels: int) -> np.ndarray:
    """Coerce X to [n, in_channels, S, S] float64.

    Accepts [n, S, S] grayscale (replicated across channels) or
    [n, C, S, S] with C equal to ``in_channels``. uint8 input is mapped to
    [-1, 1] exactly like the file pipeline ((x/255 - 0.5) / 0.5); float
    input is taken as already scaled.
    """
    X = np.asarray(X)
    if X.ndim == 3:
        X = X[:, None, :, :]
    if X.ndim != 4:
        raise ShapeError(f"images must be [n, S, S] or [n, C, S, S], got shape {X.shape}")
    n, c, h, w = X.shape
    if n == 0:
        raise DataError("empty image batch")
    if h != image_size or w != image_size:
        raise ShapeError(f"expected {image_size}x{image_size} images, got {h}x{w}")
    if c == 1 and in_channels > 1:
        X = np.broadcast_to(X, (n, in_channels, h, w))
    elif c != in_channels:
        raise ShapeError(f"expected {in_channels} channels, got {c}")
    if X.dtype == np.uint8:
        X = (X.astype(np.float64) / 255.0 - 0.5) / 0.5
    else:
        X = np.asarray(X, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise DataError("images contain non-finite values")
    return np.ascontiguousarray(X)


def check_labels(y, n_samples: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ShapeError(f"labels must be 1-D, got shape {y.shape}")
    if len(y) != n_samples:
        raise DataError(f"{n_samples} images but {len(y)} labels")
    return y
