"""Global and recursive Otsu binarization."""

from __future__ import annotations

import numpy as np

from .errors import DataError
from .raster import as_gray, make_mask


def histogram256(img: np.ndarray) -> np.ndarray:
    """256-bin intensity histogram as int64 counts."""
    img = as_gray(img)
    return np.bincount(img.ravel(), minlength=256).astype(np.int64)


def otsu_threshold(hist: np.ndarray) -> int:
    """Threshold maximizing between-class variance with class0 = values <= t.

    Ties are broken by the smallest t. If all mass sits in a single bin,
    that bin value is returned.
    """
    hist = np.asarray(hist, dtype=np.float64)
    if hist.shape != (256,) or hist.sum() <= 0 or (hist < 0).any():
        raise DataError("histogram must be 256 non-negative bins with mass")
    nonzero = np.flatnonzero(hist)
    if len(nonzero) == 1:
        return int(nonzero[0])
    total = hist.sum()
    values = np.arange(256, dtype=np.float64)
    w0 = np.cumsum(hist)
    m0 = np.cumsum(hist * values)
    mean = m0[-1] / total
    w1 = total - w0
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = m0 / w0
        mu1 = (m0[-1] - m0) / w1
        sigma = w0 * w1 * (mu0 - mu1) ** 2
    sigma[~np.isfinite(sigma)] = -1.0
    return int(np.argmax(sigma))


def binarize(img: np.ndarray, t: int, polarity: str) -> np.ndarray:
    """dark_fg marks pixels <= t as 255; bright_fg marks pixels > t."""
    img = as_gray(img)
    if polarity == "dark_fg":
        return make_mask(img <= t)
    if polarity == "bright_fg":
        return make_mask(img > t)
    raise DataError(f"unknown binarize polarity {polarity!r}")


def recursive_otsu(
    img: np.ndarray,
    max_depth: int = 3,
    delta_stop: int = 5,
    max_ink_fraction: float = 0.4,
) -> np.ndarray:
    """Repeated Otsu binarization restricted to the remaining background.

    Round 1 thresholds the full histogram and takes the dark class as ink.
    Each later round recomputes Otsu on the non-ink pixels only; pixels
    below the new threshold join the ink. Stops at max_depth, when the
    threshold moves by at most delta_stop, or when adding a round would
    push the ink fraction past max_ink_fraction (that round is discarded).
    A histogram with fewer than two occupied bins yields no new ink.
    """
    img = as_gray(img)
    if max_depth < 1:
        raise DataError("max_depth must be >= 1")
    total = img.size
    ink = np.zeros(img.shape, dtype=bool)
    active = np.ones(img.shape, dtype=bool)
    t_prev = None
    for _ in range(max_depth):
        vals = img[active]
        if vals.size == 0:
            break
        hist = np.bincount(vals, minlength=256).astype(np.int64)
        if np.count_nonzero(hist) < 2:
            break
        t = otsu_threshold(hist)
        if t_prev is not None and abs(t - t_prev) <= delta_stop:
            break
        new_ink = active & (img <= t)
        if (ink.sum() + new_ink.sum()) / total > max_ink_fraction:
            break
        ink |= new_ink
        active &= ~new_ink
        t_prev = t
    return make_mask(ink)
