"""Flat mathematical-morphology operators on 8-bit rasters.

Conventions, fixed once for the whole package:

* erosion samples at x+b, dilation at x-b (adjoint pair), so openings and
  closings are idempotent for asymmetric structuring elements as well;
* out-of-image pixels take the operator-neutral extreme (255 for erosion,
  0 for dilation) so dark structures at the sheet edge survive closings;
* 8-connectivity for grayscale reconstruction and foreground components,
  4-connectivity for quasi-flat zones and hole backgrounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Tuple

import numpy as np
from scipy import ndimage as ndi
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _cc
from skimage.morphology import reconstruction as _sk_reconstruction

from .errors import DataError
from .raster import as_gray, as_labels, as_mask, make_mask

_N8 = np.ones((3, 3), dtype=int)
_N4 = ndi.generate_binary_structure(2, 1)


# ---------------------------------------------------------------------------
# structuring elements

@dataclass(frozen=True)
class StructuringElement:
    """Set of (dx, dy) offsets with the origin included, plus a descriptor."""

    offsets: Tuple[Tuple[int, int], ...]
    shape: str

    def __post_init__(self):
        if not self.offsets:
            raise DataError("structuring element must be non-empty")
        if (0, 0) not in self.offsets:
            raise DataError("structuring element must contain the origin")


def _make_se(offsets: Iterable[Tuple[int, int]], shape: str) -> StructuringElement:
    uniq = sorted(set((int(dx), int(dy)) for dx, dy in offsets))
    return StructuringElement(tuple(uniq), shape)


def square(n: int) -> StructuringElement:
    """n x n square. For even n the extra row/column sits on the +dx/+dy side."""
    if n < 1:
        raise DataError("square size must be >= 1")
    lo, hi = -((n - 1) // 2), n // 2
    return _make_se(
        [(dx, dy) for dy in range(lo, hi + 1) for dx in range(lo, hi + 1)],
        f"square({n})",
    )


def disk(r: float) -> StructuringElement:
    """Digital disk of radius r: offsets with dx^2 + dy^2 <= r^2."""
    if r < 0:
        raise DataError("disk radius must be >= 0")
    k = int(np.floor(r))
    offs = [
        (dx, dy)
        for dy in range(-k, k + 1)
        for dx in range(-k, k + 1)
        if dx * dx + dy * dy <= r * r
    ]
    return _make_se(offs, f"disk({r})")


def cross(arm: int) -> StructuringElement:
    """Axis-aligned cross with arms of the given length."""
    if arm < 0:
        raise DataError("cross arm must be >= 0")
    offs = [(0, 0)]
    for i in range(1, arm + 1):
        offs += [(i, 0), (-i, 0), (0, i), (0, -i)]
    return _make_se(offs, f"cross({arm})")


def line(length: int, angle_deg: float) -> StructuringElement:
    """Digitized centered segment of `length` pixels at `angle_deg`.

    Angles are measured from the +x axis with y pointing down (image rows).
    """
    if length < 1:
        raise DataError("line length must be >= 1")
    a = np.deg2rad(angle_deg)
    c, s = np.cos(a), np.sin(a)
    lo = -((length - 1) // 2)
    idx = np.arange(lo, lo + length)
    if abs(c) >= abs(s):
        dx = idx
        dy = np.floor(idx * (s / c) + 0.5).astype(int) if c != 0 else np.zeros_like(idx)
    else:
        dy = idx
        dx = np.floor(idx * (c / s) + 0.5).astype(int)
    return _make_se(zip(dx, dy), f"line({length},{angle_deg})")


def rotated_cross(length: int, angle_deg: float) -> StructuringElement:
    """Union of two perpendicular line segments at angle_deg and angle_deg+90."""
    a = line(length, angle_deg)
    b = line(length, angle_deg + 90.0)
    return _make_se(a.offsets + b.offsets, f"rotated_cross({length},{angle_deg})")


def reflect(se: StructuringElement) -> StructuringElement:
    """Point reflection through the origin."""
    return _make_se([(-dx, -dy) for dx, dy in se.offsets], f"reflect({se.shape})")


def _footprint(se: StructuringElement) -> np.ndarray:
    dxs = [dx for dx, _ in se.offsets]
    dys = [dy for _, dy in se.offsets]
    kx = max(max(dxs), -min(dxs))
    ky = max(max(dys), -min(dys))
    fp = np.zeros((2 * ky + 1, 2 * kx + 1), dtype=bool)
    for dx, dy in se.offsets:
        fp[ky + dy, kx + dx] = True
    return fp


# ---------------------------------------------------------------------------
# basic flat operators

def erode(img: np.ndarray, se: StructuringElement) -> np.ndarray:
    img = as_gray(img)
    return ndi.minimum_filter(img, footprint=_footprint(se), mode="constant", cval=255)


def dilate(img: np.ndarray, se: StructuringElement) -> np.ndarray:
    img = as_gray(img)
    return ndi.maximum_filter(
        img, footprint=_footprint(reflect(se)), mode="constant", cval=0
    )


def se_filter(img: np.ndarray, se: StructuringElement, mode: str) -> np.ndarray:
    """Flat erosion / dilation / opening / closing with the given SE."""
    if mode == "erode":
        return erode(img, se)
    if mode == "dilate":
        return dilate(img, se)
    if mode == "open":
        return dilate(erode(img, se), se)
    if mode == "close":
        return erode(dilate(img, se), se)
    raise DataError(f"unknown se_filter mode {mode!r}")


def top_hat(img: np.ndarray, se: StructuringElement, polarity: str) -> np.ndarray:
    """white: img - open(img); black: close(img) - img. Saturates at 0."""
    img = as_gray(img)
    if polarity == "white":
        diff = img.astype(np.int16) - se_filter(img, se, "open").astype(np.int16)
    elif polarity == "black":
        diff = se_filter(img, se, "close").astype(np.int16) - img.astype(np.int16)
    else:
        raise DataError(f"unknown top_hat polarity {polarity!r}")
    return np.clip(diff, 0, 255).astype(np.uint8)


def gradient(img: np.ndarray, se: StructuringElement) -> np.ndarray:
    """Morphological gradient: dilate - erode."""
    img = as_gray(img)
    d = dilate(img, se).astype(np.int16)
    e = erode(img, se).astype(np.int16)
    return np.clip(d - e, 0, 255).astype(np.uint8)


def directional_close(img: np.ndarray, length: int, angle_deg: float) -> np.ndarray:
    """Closing with a line SE of the given length and angle."""
    return se_filter(img, line(length, angle_deg), "close")


# ---------------------------------------------------------------------------
# geodesic reconstruction and derived operators

def geodesic_reconstruct(
    marker: np.ndarray, mask: np.ndarray, direction: str
) -> np.ndarray:
    """Fixed point of geodesic dilation (or erosion) of marker under mask.

    8-connectivity. by_dilation requires marker <= mask pointwise,
    by_erosion requires marker >= mask. The fixed point is unique, so the
    result does not depend on the propagation order.
    """
    marker = as_gray(marker)
    mask = as_gray(mask)
    if marker.shape != mask.shape:
        raise DataError("marker and mask dimensions differ")
    if direction == "by_dilation":
        if (marker > mask).any():
            raise DataError("by_dilation requires marker <= mask everywhere")
        method = "dilation"
    elif direction == "by_erosion":
        if (marker < mask).any():
            raise DataError("by_erosion requires marker >= mask everywhere")
        method = "erosion"
    else:
        raise DataError(f"unknown reconstruction direction {direction!r}")
    out = _sk_reconstruction(
        marker.astype(np.float64), mask.astype(np.float64), method=method,
        footprint=np.ones((3, 3)),
    )
    return out.astype(np.uint8)


def fill_holes(mask: np.ndarray) -> np.ndarray:
    """Fill background components not 4-connected to the image border."""
    mask = as_mask(mask)
    bg = mask == 0
    lbl, n = ndi.label(bg, structure=_N4)
    if n == 0:
        return mask.copy()
    border = np.zeros(n + 1, dtype=bool)
    border[lbl[0, :]] = True
    border[lbl[-1, :]] = True
    border[lbl[:, 0]] = True
    border[lbl[:, -1]] = True
    border[0] = True
    holes = bg & ~border[lbl]
    return make_mask((mask == 255) | holes)


def fill_holes_gray(img: np.ndarray) -> np.ndarray:
    """Grayscale hole filling: fill dark basins not reaching the border."""
    img = as_gray(img)
    if img.shape[0] <= 2 or img.shape[1] <= 2:
        return img.copy()
    marker = np.full_like(img, 255)
    marker[0, :] = img[0, :]
    marker[-1, :] = img[-1, :]
    marker[:, 0] = img[:, 0]
    marker[:, -1] = img[:, -1]
    return geodesic_reconstruct(marker, img, "by_erosion")


def area_filter(img: np.ndarray, area: int, mode: str) -> np.ndarray:
    """Area closing (remove dark components < area) or opening (dual).

    Implemented by threshold decomposition: the closing output at p is the
    smallest level t such that the connected component of {img <= t}
    containing p has at least `area` pixels, capped at the image maximum
    (the root component is never removed). 8-connectivity.
    """
    img = as_gray(img)
    if area < 1:
        raise DataError("area threshold must be >= 1")
    if mode == "opening":
        return 255 - area_filter(255 - img, area, "closing")
    if mode != "closing":
        raise DataError(f"unknown area_filter mode {mode!r}")
    if area == 1:
        return img.copy()
    out = np.full_like(img, img.max())
    done = np.zeros(img.shape, dtype=bool)
    for t in np.unique(img):
        level = img <= t
        lbl, n = ndi.label(level, structure=_N8)
        if n == 0:
            continue
        sizes = np.bincount(lbl.ravel(), minlength=n + 1)
        big = sizes >= area
        big[0] = False
        newly = big[lbl] & ~done
        out[newly] = t
        done |= newly
        if done.all():
            break
    return out


def _flat_zones8(img: np.ndarray) -> np.ndarray:
    """Label 8-connected constant-value zones, raster discovery order."""
    return _graph_zones(img, slope=0, diag=True)


def _graph_zones(img: np.ndarray, slope: int, diag: bool) -> np.ndarray:
    h, w = img.shape
    idx = np.arange(h * w).reshape(h, w)
    v = img.astype(np.int16)
    rows, cols = [], []
    pairs = [((slice(None), slice(None, -1)), (slice(None), slice(1, None)))]
    pairs.append(((slice(None, -1), slice(None)), (slice(1, None), slice(None))))
    if diag:
        pairs.append(((slice(None, -1), slice(None, -1)), (slice(1, None), slice(1, None))))
        pairs.append(((slice(None, -1), slice(1, None)), (slice(1, None), slice(None, -1))))
    for a, b in pairs:
        ok = np.abs(v[a] - v[b]) <= slope
        rows.append(idx[a][ok])
        cols.append(idx[b][ok])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    g = coo_matrix(
        (np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(h * w, h * w)
    )
    _, comp = _cc(g, directed=False)
    comp = comp.reshape(h, w)
    return _relabel_discovery_order(comp + 1)


def _relabel_discovery_order(lbl: np.ndarray) -> np.ndarray:
    """Remap positive labels to 1..k in raster-scan first-occurrence order."""
    flat = lbl.ravel()
    uniq, first = np.unique(flat, return_index=True)
    pos = uniq > 0
    uniq, first = uniq[pos], first[pos]
    order = np.argsort(first, kind="stable")
    lut = np.zeros(int(uniq.max()) + 1 if len(uniq) else 1, dtype=np.int32)
    lut[uniq[order]] = np.arange(1, len(uniq) + 1, dtype=np.int32)
    return lut[flat].reshape(lbl.shape)


def quasi_flat_zones(img: np.ndarray, slope: int) -> np.ndarray:
    """Connected components over 4-neighbors with |intensity step| <= slope."""
    img = as_gray(img)
    if slope < 0:
        raise DataError("slope must be >= 0")
    return _graph_zones(img, slope=slope, diag=False)


def minima_by_dynamics(img: np.ndarray, h: int) -> np.ndarray:
    """Label the regional minima of the h-reconstruction of img.

    Equivalent to keeping minima whose dynamic is at least h: reconstruct
    min(img + h, 255) by erosion over img, then label the regional minima
    of the result (8-connected flat zones with no lower neighbor).
    """
    img = as_gray(img)
    if h < 1:
        raise DataError("dynamic h must be >= 1")
    marker = np.clip(img.astype(np.int16) + h, 0, 255).astype(np.uint8)
    hrec = geodesic_reconstruct(marker, img, "by_erosion")
    ero = ndi.minimum_filter(hrec, size=3, mode="constant", cval=255)
    has_lower = ero < hrec
    zones = _flat_zones8(hrec)
    nz = int(zones.max())
    zone_has_lower = np.zeros(nz + 1, dtype=bool)
    np.maximum.at(zone_has_lower, zones.ravel(), has_lower.ravel())
    is_min = ~zone_has_lower
    is_min[0] = False
    minima = np.where(is_min[zones], zones, 0)
    return _relabel_discovery_order(minima)


# ---------------------------------------------------------------------------
# watershed

def watershed(relief: np.ndarray, markers: np.ndarray) -> np.ndarray:
    """Meyer flooding from markers, 8-connectivity.

    The queue is a priority queue keyed on the relief value with FIFO order
    among equal values; a pixel keeps the label of the first flood that
    queued it. Every pixel receives a label (no watershed-line pixels).
    """
    markers = as_labels(markers)
    relief = np.asarray(relief)
    if relief.shape != markers.shape:
        raise DataError("relief and marker dimensions differ")
    if not (markers > 0).any():
        raise DataError("marker set is empty")
    from ._flood import flood_from_markers

    return flood_from_markers(relief.astype(np.float64), markers.astype(np.int32))


def distance_transform(mask: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance of every pixel to the nearest foreground pixel."""
    mask = as_mask(mask)
    if not (mask == 255).any():
        raise DataError("distance transform of an empty mask")
    return ndi.distance_transform_edt(mask == 0)
