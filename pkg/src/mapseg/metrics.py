"""Scoring protocols for the three tasks.

* instance segmentation: panoptic quality (PQ = SQ x RQ) with IoU > 0.5
  one-to-one matching, plus the F-score-vs-IoU-threshold curve;
* content segmentation: symmetric 95th-percentile boundary distance;
* point detection: F_beta-vs-distance-threshold curve and its normalized
  area, beta = 0.5 so precision weighs more than recall.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage as ndi

from .components import label_components
from .errors import DataError
from .morph import distance_transform
from .raster import as_labels, as_mask, as_points, make_mask


# ---------------------------------------------------------------------------
# panoptic quality

@dataclass
class PQReport:
    tp_pairs: List[Tuple[int, int, float]]  # (pred label, gt label, IoU)
    fp: int
    fn: int
    sq: float
    rq: float
    pq: float
    iou_thresholds: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fscore_curve: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def tp(self) -> int:
        return len(self.tp_pairs)


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two pixel sets (boolean arrays)."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise DataError("iou inputs must share a shape")
    union = np.logical_or(a, b).sum()
    if union == 0:
        raise DataError("iou of two empty sets is undefined")
    return float(np.logical_and(a, b).sum() / union)


def match_instances(
    pred: np.ndarray, gt: np.ndarray
) -> Tuple[List[Tuple[int, int, float]], List[int], List[int]]:
    """Pair instances with IoU > 0.5; returns (tp pairs, fp labels, fn labels).

    A pair above 0.5 IoU is necessarily unique for both sides, so the
    pairing can be read straight off the co-occurrence counts.
    """
    pred = as_labels(pred)
    gt = as_labels(gt)
    if pred.shape != gt.shape:
        raise DataError(
            f"dimension mismatch: pred {pred.shape} vs gt {gt.shape}"
        )
    np_max = int(pred.max())
    ng_max = int(gt.max())
    pred_areas = np.bincount(pred.ravel(), minlength=np_max + 1)
    gt_areas = np.bincount(gt.ravel(), minlength=ng_max + 1)
    offset = np.int64(ng_max) + 1
    combined = pred.astype(np.int64) * offset + gt.astype(np.int64)
    codes, counts = np.unique(combined, return_counts=True)
    pairs = []
    for code, inter in zip(codes, counts):
        p = int(code // offset)
        g = int(code % offset)
        if p == 0 or g == 0:
            continue
        union = pred_areas[p] + gt_areas[g] - inter
        val = inter / union
        if val > 0.5:
            pairs.append((p, g, float(val)))
    matched_p = {p for p, _, _ in pairs}
    matched_g = {g for _, g, _ in pairs}
    fp = [p for p in range(1, np_max + 1) if pred_areas[p] > 0 and p not in matched_p]
    fn = [g for g in range(1, ng_max + 1) if gt_areas[g] > 0 and g not in matched_g]
    return pairs, fp, fn


def _as_instances(arr: np.ndarray, connectivity: int) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.dtype == bool:
        return label_components(make_mask(arr), connectivity)
    vals = np.unique(arr)
    if arr.dtype == np.uint8 and np.isin(vals, (0, 255)).all():
        return label_components(as_mask(arr), connectivity)
    return as_labels(arr)


def coco_pq(
    pred: np.ndarray,
    gt: np.ndarray,
    connectivity: int = 8,
    iou_step: float = 0.01,
) -> PQReport:
    """Panoptic quality of pred vs gt; binary masks are labeled first.

    The F-score curve samples IoU thresholds 0.5 .. 1.0; at threshold t,
    F = 2 TP_t / (2 TP_t + FP_t + FN_t) counting only pairs with IoU > t.
    """
    pred_l = _as_instances(pred, connectivity)
    gt_l = _as_instances(gt, connectivity)
    pairs, fp, fn = match_instances(pred_l, gt_l)
    tp = len(pairs)
    sq = float(np.mean([v for _, _, v in pairs])) if pairs else 0.0
    denom = tp + 0.5 * len(fp) + 0.5 * len(fn)
    rq = tp / denom if denom > 0 else 0.0
    n_pred = tp + len(fp)
    n_gt = tp + len(fn)
    thresholds = np.round(np.arange(0.5, 1.0 + iou_step / 2, iou_step), 10)
    ious = np.sort(np.array([v for _, _, v in pairs]))
    # pairs with IoU strictly above each threshold
    tp_t = len(ious) - np.searchsorted(ious, thresholds, side="right")
    with np.errstate(divide="ignore", invalid="ignore"):
        curve = np.where(n_pred + n_gt > 0, 2.0 * tp_t / (n_pred + n_gt), 0.0)
    return PQReport(
        tp_pairs=pairs,
        fp=len(fp),
        fn=len(fn),
        sq=sq,
        rq=rq,
        pq=sq * rq,
        iou_thresholds=thresholds,
        fscore_curve=curve,
    )


# ---------------------------------------------------------------------------
# Hausdorff 95

@dataclass(frozen=True)
class Hausdorff95Result:
    value: float
    d_ab: float  # 95th percentile of boundary-A -> boundary-B distances
    d_ba: float


def _boundary(mask: np.ndarray) -> np.ndarray:
    """Foreground pixels 4-adjacent to background (image edge counts)."""
    fg = mask == 255
    eroded = ndi.binary_erosion(
        fg, structure=ndi.generate_binary_structure(2, 1), border_value=0
    )
    return fg & ~eroded


def _nearest_rank_p95(dists: np.ndarray) -> float:
    s = np.sort(dists)
    k = int(np.ceil(0.95 * len(s)))
    return float(s[max(k - 1, 0)])


def hausdorff95(
    a: np.ndarray, b: np.ndarray, variant: str = "max"
) -> Hausdorff95Result:
    """Symmetric 95th-percentile boundary distance between two masks.

    Distances are measured between boundary pixel sets; the top 5 percent
    of each directed distance multiset is discarded via the nearest-rank
    percentile. variant="max" (default) takes the max of the two directed
    values, variant="pooled" the percentile of the pooled multiset.
    """
    a = as_mask(a)
    b = as_mask(b)
    if a.shape != b.shape:
        raise DataError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if not (a == 255).any() or not (b == 255).any():
        raise DataError("hausdorff95 requires two non-empty masks")
    ba = _boundary(a)
    bb = _boundary(b)
    dt_b = distance_transform(make_mask(bb))
    dt_a = distance_transform(make_mask(ba))
    d_ab = dt_b[ba]
    d_ba = dt_a[bb]
    p_ab = _nearest_rank_p95(d_ab)
    p_ba = _nearest_rank_p95(d_ba)
    if variant == "max":
        value = max(p_ab, p_ba)
    elif variant == "pooled":
        value = _nearest_rank_p95(np.concatenate([d_ab, d_ba]))
    else:
        raise DataError(f"unknown hausdorff95 variant {variant!r}")
    return Hausdorff95Result(value=value, d_ab=p_ab, d_ba=p_ba)


def mean_hausdorff95(values: Sequence[float]) -> float:
    """Arithmetic mean of per-image Hausdorff-95 values."""
    if len(values) == 0:
        raise DataError("mean of an empty set")
    return float(np.mean(values))


# ---------------------------------------------------------------------------
# point detection

@dataclass
class DetectionCurve:
    thresholds: np.ndarray
    fbeta: np.ndarray
    auc: float
    beta: float


def match_points(
    pred: np.ndarray, gt: np.ndarray, threshold: float
) -> Tuple[int, int, int]:
    """Mutual-nearest point matching with a strict distance threshold.

    A ground-truth point counts as detected iff its nearest predicted point
    (ties broken by lowest index) lies strictly closer than `threshold` and
    that prediction's own nearest ground-truth point is this one, which
    enforces a one-to-one assignment.
    """
    pred = as_points(pred)
    gt = as_points(gt)
    if threshold < 0:
        raise DataError("threshold must be >= 0")
    if len(pred) == 0 or len(gt) == 0:
        return 0, len(pred), len(gt)
    d = np.linalg.norm(gt[:, None, :] - pred[None, :, :], axis=2)
    nearest_pred = np.argmin(d, axis=1)
    nearest_gt = np.argmin(d, axis=0)
    gi = np.arange(len(gt))
    mutual = nearest_gt[nearest_pred] == gi
    close = d[gi, nearest_pred] < threshold
    tp = int(np.count_nonzero(mutual & close))
    return tp, len(pred) - tp, len(gt) - tp


def _matched_distances(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Distances of mutual-nearest (gt, pred) pairs, independent of threshold."""
    if len(pred) == 0 or len(gt) == 0:
        return np.zeros(0)
    d = np.linalg.norm(gt[:, None, :] - pred[None, :, :], axis=2)
    nearest_pred = np.argmin(d, axis=1)
    nearest_gt = np.argmin(d, axis=0)
    gi = np.arange(len(gt))
    mutual = nearest_gt[nearest_pred] == gi
    return d[gi[mutual], nearest_pred[mutual]]


def detection_score(
    pred: np.ndarray,
    gt: np.ndarray,
    beta: float = 0.5,
    max_threshold: float = 50.0,
    step: float = 0.5,
) -> DetectionCurve:
    """F_beta-vs-threshold curve over [0, max_threshold] and its area / max.

    Precision is 1 when there are no predictions at all (nothing wrong was
    produced) and F is 0 whenever the F_beta denominator vanishes.
    """
    pred = as_points(pred)
    gt = as_points(gt)
    if len(gt) == 0:
        raise DataError("detection_score requires a non-empty ground truth")
    thresholds = np.arange(0.0, max_threshold + step / 2, step)
    dists = np.sort(_matched_distances(pred, gt))
    tp = np.searchsorted(dists, thresholds, side="left").astype(np.float64)
    n_pred = len(pred)
    if n_pred == 0:
        precision = np.ones_like(tp)
    else:
        precision = tp / n_pred
    recall = tp / len(gt)
    b2 = beta * beta
    denom = b2 * precision + recall
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(denom > 0, (1 + b2) * precision * recall / denom, 0.0)
    auc = float(np.trapz(f, thresholds) / max_threshold)
    return DetectionCurve(thresholds=thresholds, fbeta=f, auc=auc, beta=beta)


def aggregate_detection(curves: Sequence[DetectionCurve]) -> float:
    """Mean of per-image curve areas."""
    if len(curves) == 0:
        raise DataError("aggregate of an empty set")
    return float(np.mean([c.auc for c in curves]))
