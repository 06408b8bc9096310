"""Raster containers and file I/O.

Images are carried as numpy arrays throughout the package:

* gray image   -- 2-D uint8, shape (H, W), origin at the top-left pixel
* RGB image    -- 3-D uint8, shape (H, W, 3)
* binary mask  -- 2-D uint8 restricted to {0, 255}, 255 = foreground
* label image  -- 2-D int32, 0 = background, positive values = instances
* point list   -- float64 array of shape (N, 2), columns (x, y) where
                  x is the column index and y the row index

Only lossless formats are read and written: PNG (8-bit gray / RGB) and
binary PGM/PPM. JPEG inputs must be converted beforehand, e.g.
``python -c "from PIL import Image; Image.open('in.jpg').save('out.png')"``.
"""

from __future__ import annotations

import csv
import warnings
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DataError, FormatError

PathLike = Union[str, Path]

_ACCEPTED_FORMATS = {"PNG", "PPM"}  # PIL reports PGM and PPM both as "PPM"


def as_gray(arr: np.ndarray) -> np.ndarray:
    """Validate and return a gray image (2-D uint8)."""
    arr = np.asarray(arr)
    if arr.ndim != 2 or arr.size == 0:
        raise DataError(f"gray image must be non-empty 2-D, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        raise DataError(f"gray image must be uint8, got {arr.dtype}")
    return arr


def as_rgb(arr: np.ndarray) -> np.ndarray:
    """Validate and return an RGB image (H, W, 3) uint8."""
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DataError(f"RGB image must have shape (H, W, 3), got {arr.shape}")
    if arr.dtype != np.uint8:
        raise DataError(f"RGB image must be uint8, got {arr.dtype}")
    return arr


def as_mask(arr: np.ndarray) -> np.ndarray:
    """Validate and return a binary mask (2-D uint8 with values in {0, 255})."""
    arr = np.asarray(arr)
    if arr.ndim != 2 or arr.size == 0:
        raise DataError(f"mask must be non-empty 2-D, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        raise DataError(f"mask must be uint8, got {arr.dtype}")
    bad = (arr != 0) & (arr != 255)
    if bad.any():
        raise DataError("mask contains values other than 0 and 255")
    return arr


def make_mask(fg: np.ndarray) -> np.ndarray:
    """Build a {0,255} mask from a boolean (or truthy) array."""
    return np.where(np.asarray(fg).astype(bool), 255, 0).astype(np.uint8)


def as_labels(arr: np.ndarray) -> np.ndarray:
    """Validate and return a label image (2-D non-negative integers)."""
    arr = np.asarray(arr)
    if arr.ndim != 2 or arr.size == 0:
        raise DataError(f"label image must be non-empty 2-D, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise DataError(f"label image must be integer, got {arr.dtype}")
    if arr.min() < 0:
        raise DataError("label image contains negative labels")
    return arr.astype(np.int32, copy=False)


def as_points(pts) -> np.ndarray:
    """Validate and return a point list as an (N, 2) float64 array."""
    pts = np.asarray(pts, dtype=np.float64)
    if pts.size == 0:
        return pts.reshape(0, 2)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DataError(f"point list must have shape (N, 2), got {pts.shape}")
    if not np.isfinite(pts).all():
        raise DataError("point list contains non-finite coordinates")
    return pts


def load_image(path: PathLike) -> np.ndarray:
    """Load a PNG or PGM/PPM image as a gray or RGB uint8 array.

    16-bit inputs are rejected. JPEG is not supported (see module docstring
    for the conversion recipe).
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            fmt = im.format
            if fmt == "JPEG":
                raise FormatError(
                    f"{path}: JPEG input not supported; convert to PNG first"
                )
            if fmt not in _ACCEPTED_FORMATS:
                raise FormatError(f"{path}: unsupported format {fmt!r}")
            if im.mode in ("I", "I;16", "I;16B", "I;16L", "F"):
                raise FormatError(f"{path}: unsupported bit depth (mode {im.mode})")
            if im.mode == "P":
                im = im.convert("RGB")
            if im.mode == "1":
                im = im.convert("L")
            if im.mode not in ("L", "RGB"):
                raise FormatError(f"{path}: unsupported mode {im.mode!r}")
            arr = np.asarray(im, dtype=np.uint8)
    except (UnidentifiedImageError, SyntaxError, OSError) as exc:
        raise FormatError(f"{path}: corrupt header ({exc})") from exc
    return arr


def save_image(img: np.ndarray, path: PathLike) -> None:
    """Save a gray or RGB uint8 array; format chosen from the suffix."""
    path = Path(path)
    suffix = path.suffix.lower()
    if img.ndim == 2:
        pil = Image.fromarray(as_gray(img), mode="L")
    else:
        pil = Image.fromarray(as_rgb(img), mode="RGB")
    if suffix == ".png":
        pil.save(path, format="PNG")
    elif suffix in (".pgm", ".ppm", ".pnm"):
        pil.save(path)
    else:
        raise FormatError(f"{path}: unsupported output suffix {suffix!r}")


def save_mask(mask: np.ndarray, path: PathLike) -> None:
    """Save a binary mask as an 8-bit single-channel PNG."""
    save_image(as_mask(mask), path)


def load_mask(path: PathLike) -> np.ndarray:
    """Load a single-channel image as a binary mask.

    Values >= 128 normalize to 255, everything below to 0; multi-channel
    inputs are rejected.
    """
    arr = load_image(path)
    if arr.ndim != 2:
        raise FormatError(f"{path}: mask must be single-channel, got RGB")
    return make_mask(arr >= 128)


def to_luminance(img: np.ndarray) -> np.ndarray:
    """Rec.601 luminance, round-half-up: round(0.299 R + 0.587 G + 0.114 B)."""
    img = as_rgb(img)
    f = img.astype(np.float64)
    lum = 0.299 * f[..., 0] + 0.587 * f[..., 1] + 0.114 * f[..., 2]
    return np.clip(np.floor(lum + 0.5), 0, 255).astype(np.uint8)


def crop_to_mask(img: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Zero out pixels outside the mask; pixels inside are unchanged."""
    img = as_gray(img)
    mask = as_mask(mask)
    if img.shape != mask.shape:
        raise DataError(
            f"dimension mismatch: image {img.shape} vs mask {mask.shape}"
        )
    out = img.copy()
    out[mask == 0] = 0
    return out


def load_points(path: PathLike) -> np.ndarray:
    """Read a point CSV: one "x,y" record per line, optional "x,y" header.

    Record order is preserved. Negative coordinates raise a warning but are
    kept; non-numeric fields are an error reported with the line number.
    """
    path = Path(path)
    points = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if lineno == 1 and [c.strip().lower() for c in row] == ["x", "y"]:
                continue
            if len(row) != 2:
                raise FormatError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                x, y = float(row[0]), float(row[1])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-numeric field ({exc})") from exc
            if x < 0 or y < 0:
                warnings.warn(f"{path}:{lineno}: negative coordinate ({x}, {y})")
            points.append((x, y))
    return as_points(points)


def save_points(points: np.ndarray, path: PathLike) -> None:
    """Write a point list as CSV with an "x,y" header, 3 decimal places."""
    points = as_points(points)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("x,y\n")
        for x, y in points:
            fh.write(f"{x:.3f},{y:.3f}\n")
