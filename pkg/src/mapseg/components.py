"""Connected-component labeling and attribute-based filtering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
from scipy import ndimage as ndi

from .errors import DataError
from .morph import _relabel_discovery_order
from .raster import as_labels, as_mask, make_mask

_STRUCTS = {
    4: ndi.generate_binary_structure(2, 1),
    8: np.ones((3, 3), dtype=int),
}


@dataclass(frozen=True)
class ComponentStats:
    """Per-component attributes. bbox is (xmin, ymin, xmax, ymax), inclusive."""

    label: int
    area: int
    bbox: tuple
    fill_ratio: float
    overlap: Optional[float] = None


def label_components(mask: np.ndarray, connectivity: int = 8) -> np.ndarray:
    """Label foreground components 1..k in raster-scan discovery order."""
    mask = as_mask(mask)
    if connectivity not in _STRUCTS:
        raise DataError("connectivity must be 4 or 8")
    lbl, _ = ndi.label(mask == 255, structure=_STRUCTS[connectivity])
    return _relabel_discovery_order(lbl)


def component_stats(
    labels: np.ndarray, reference: Optional[np.ndarray] = None
) -> List[ComponentStats]:
    """One record per positive label; overlap computed iff reference given."""
    labels = as_labels(labels)
    ref = None
    if reference is not None:
        ref = as_mask(reference)
        if ref.shape != labels.shape:
            raise DataError(
                f"dimension mismatch: labels {labels.shape} vs reference {ref.shape}"
            )
    k = int(labels.max())
    if k == 0:
        return []
    areas = np.bincount(labels.ravel(), minlength=k + 1)
    inter = None
    if ref is not None:
        inter = np.bincount(
            labels.ravel(), weights=(ref.ravel() == 255), minlength=k + 1
        )
    slices = ndi.find_objects(labels, max_label=k)
    out = []
    for lab in range(1, k + 1):
        sl = slices[lab - 1]
        if sl is None:
            continue
        ys, xs = sl
        bbox = (xs.start, ys.start, xs.stop - 1, ys.stop - 1)
        bbox_area = (bbox[2] - bbox[0] + 1) * (bbox[3] - bbox[1] + 1)
        area = int(areas[lab])
        overlap = None if inter is None else float(inter[lab]) / area
        out.append(
            ComponentStats(
                label=lab,
                area=area,
                bbox=bbox,
                fill_ratio=area / bbox_area,
                overlap=overlap,
            )
        )
    return out


def filter_components(
    labels: np.ndarray,
    predicate: Callable[[ComponentStats], bool],
    reference: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Keep exactly the components whose stats satisfy the predicate."""
    labels = as_labels(labels)
    stats = component_stats(labels, reference)
    keep = np.zeros(int(labels.max()) + 1, dtype=bool)
    for st in stats:
        if predicate(st):
            keep[st.label] = True
    return make_mask(keep[labels])


def remove_small(mask: np.ndarray, min_area: int, connectivity: int = 8) -> np.ndarray:
    """Drop foreground components with fewer than min_area pixels."""
    if min_area < 1:
        raise DataError("min_area must be >= 1")
    labels = label_components(mask, connectivity)
    return filter_components(labels, lambda st: st.area >= min_area)
