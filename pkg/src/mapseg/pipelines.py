"""End-to-end competitor pipelines assembled from the kernel modules.

Every pipeline is a pure function of (image, config): identical inputs
produce bit-identical outputs. Degenerate inputs degrade to empty outputs
with a logged diagnostic instead of raising.
"""

from __future__ import annotations

import logging
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage as ndi

from . import components, lines, morph, thresh
from .config import (
    PipelineConfig,
    Task1Cmm2Config,
    Task2CmmConfig,
    Task3CmmConfig,
    Task3UwbConfig,
)
from .errors import DataError
from .raster import as_gray, as_mask, as_points, as_rgb, crop_to_mask, make_mask, to_luminance

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Task 2, UWB binarization half (the FCN half is out of scope)

def task2_binarize_uwb(img: np.ndarray, cfg: Optional[PipelineConfig] = None) -> np.ndarray:
    """Recursive-Otsu ink mask followed by small-component removal."""
    cfg = cfg or PipelineConfig()
    oc = cfg.task3_uwb.otsu
    lum = to_luminance(as_rgb(img))
    ink = thresh.recursive_otsu(
        lum,
        max_depth=oc.max_depth,
        delta_stop=oc.delta_stop,
        max_ink_fraction=oc.max_ink_fraction,
    )
    if not (ink == 255).any():
        log.info("task2_binarize_uwb: empty ink mask")
        return ink
    return components.remove_small(ink, oc.min_ink_area)


# ---------------------------------------------------------------------------
# Task 1, CMM method 2 (fully morphological)

def _river_mask(lum: np.ndarray, content_mask: np.ndarray, c: Task1Cmm2Config) -> np.ndarray:
    """Large opening, much larger closing, threshold, keep elongated blobs."""
    s = c.river_subsample
    h, w = lum.shape
    hs, ws = h // s, w // s
    if hs < 8 or ws < 8:
        return np.zeros_like(lum)
    small = lum[: hs * s, : ws * s].reshape(hs, s, ws, s).mean(axis=(1, 3))
    small = np.clip(np.floor(small + 0.5), 0, 255).astype(np.uint8)
    opened = morph.se_filter(small, morph.disk(c.river_open_len), "open")
    closed = morph.se_filter(opened, morph.disk(c.river_close_len), "close")
    t = thresh.otsu_threshold(thresh.histogram256(closed))
    if t >= c.river_max_threshold:
        return np.zeros_like(lum)
    cand = thresh.binarize(closed, t, "dark_fg")
    labels = components.label_components(cand, 8)
    min_area = max(1, c.river_min_area // (s * s))
    kept = components.filter_components(
        labels,
        lambda st: st.area >= min_area and st.fill_ratio < c.river_max_fill_ratio,
    )
    full = np.zeros((h, w), dtype=np.uint8)
    full[: hs * s, : ws * s] = np.repeat(np.repeat(kept, s, axis=0), s, axis=1)
    full[content_mask == 0] = 0
    return full


def task1_blocks_cmm2(
    img: np.ndarray, content_mask: np.ndarray, cfg: Optional[PipelineConfig] = None
) -> np.ndarray:
    """Building-block mask via area closing, hole filling, marker-controlled
    watershed on the simplified gradient, and attribute filtering."""
    cfg = cfg or PipelineConfig()
    c = cfg.task1
    img = as_rgb(img)
    content_mask = as_mask(content_mask)
    if img.shape[:2] != content_mask.shape:
        raise DataError("image and content mask dimensions differ")
    if not (content_mask == 255).any():
        raise DataError("content mask is empty")

    lum = crop_to_mask(to_luminance(img), content_mask)
    closed = morph.area_filter(lum, c.area_close, "closing")

    # invert inside the content only: the black surround must stay low so
    # it does not wall in the street network during hole filling
    inv = (255 - closed.astype(np.int16)).astype(np.uint8)
    inv[content_mask == 0] = 0
    filled = morph.fill_holes_gray(inv)

    grad = morph.gradient(filled, morph.square(c.gradient_size))
    markers = morph.minima_by_dynamics(grad, c.dynamics_h)
    marker_h = np.clip(grad.astype(np.int16) + c.dynamics_h, 0, 255).astype(np.uint8)
    simplified = morph.geodesic_reconstruct(marker_h, grad, "by_erosion")
    regions = morph.watershed(simplified, markers)

    kept = components.filter_components(
        regions,
        lambda st: c.min_area <= st.area <= c.max_area
        and st.fill_ratio >= c.min_fill_ratio,
    )
    kept = morph.fill_holes(kept)

    river = _river_mask(lum, content_mask, c)
    if (river == 255).any():
        labels = components.label_components(kept, 8)
        kept = components.filter_components(
            labels,
            lambda st: st.overlap is None or st.overlap < c.river_overlap,
            reference=river,
        )
    kept[content_mask == 0] = 0
    return kept


# ---------------------------------------------------------------------------
# Task 2, CMM (morphological content-area extraction)

def task2_content_cmm(img: np.ndarray, cfg: Optional[PipelineConfig] = None) -> np.ndarray:
    """Map-content mask: margin removal, black-line extraction, reconstruction
    from a centered rectangle, contour closing by watershed, legend removal."""
    cfg = cfg or PipelineConfig()
    c = cfg.task2
    img = as_rgb(img)
    lum = to_luminance(img)
    h, w = lum.shape

    # (i) margin: bright quasi-flat zones touching the image border
    zones = morph.quasi_flat_zones(lum, c.qfz_slope)
    nz = int(zones.max())
    touches = np.zeros(nz + 1, dtype=bool)
    for edge in (zones[0, :], zones[-1, :], zones[:, 0], zones[:, -1]):
        touches[edge] = True
    sums = np.bincount(zones.ravel(), weights=lum.ravel(), minlength=nz + 1)
    counts = np.bincount(zones.ravel(), minlength=nz + 1)
    means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    margin_zone = touches & (means >= c.margin_min_intensity)
    work = lum.copy()
    work[margin_zone[zones]] = 0

    # (ii) black lines from a thresholded black top-hat
    bth = morph.top_hat(work, morph.square(c.tophat_size), "black")
    t = thresh.otsu_threshold(thresh.histogram256(bth))
    black = thresh.binarize(bth, t, "bright_fg") if bth.max() > 0 else make_mask(
        np.zeros_like(lum, dtype=bool)
    )

    # (iii) centered rectangle W/2 x H/2
    rx = int(round(w * c.center_frac / 2))
    ry = int(round(h * c.center_frac / 2))
    rect = np.zeros_like(lum, dtype=bool)
    rect[h // 2 - ry : h // 2 + ry, w // 2 - rx : w // 2 + rx] = True

    # (iv) reconstruct the line network from the rectangle
    mask_union = make_mask((black == 255) | rect)
    marker = make_mask(rect)
    network = morph.geodesic_reconstruct(marker, mask_union, "by_dilation")

    # (v) close the contour: watershed of the inverted distance function,
    # markers = rectangle + image border
    dist = morph.distance_transform(network)
    markers = np.zeros(lum.shape, dtype=np.int32)
    markers[rect] = 1
    border = np.zeros(lum.shape, dtype=bool)
    border[0, :] = border[-1, :] = border[:, 0] = border[:, -1] = True
    markers[border & (markers == 0)] = 2
    regions = morph.watershed(-dist, markers)
    area = regions == 1

    # (vi) drop legend boxes: rectangular bright components hugging the border
    inv = area & ~(network == 255)
    labels = components.label_components(make_mask(inv), 8)
    stats = components.component_stats(labels)
    ys, xs = np.nonzero(area)
    ax0, ax1 = int(xs.min()), int(xs.max())
    ay0, ay1 = int(ys.min()), int(ys.max())
    area_px = int(area.sum())
    near = c.legend_border_frac * min(ax1 - ax0 + 1, ay1 - ay0 + 1)
    drop = np.zeros(int(labels.max()) + 1, dtype=bool)
    for st in stats:
        if st.fill_ratio < c.legend_min_fill or st.area > c.legend_max_frac * area_px:
            continue
        x0, y0, x1, y1 = st.bbox
        close_to_border = (
            x0 - ax0 <= near or ax1 - x1 <= near or y0 - ay0 <= near or ay1 - y1 <= near
        )
        if close_to_border:
            drop[st.label] = True
    out = area & ~drop[labels]
    return make_mask(out)


# ---------------------------------------------------------------------------
# Task 3, UWB (Hough grid + template refinement)

def task3_graticule_uwb(
    img: np.ndarray,
    content_mask: np.ndarray,
    cfg: Optional[PipelineConfig] = None,
) -> np.ndarray:
    """Graticule intersections: recursive-Otsu ink, Hough grid selection,
    analytic intersections, template-matching refinement, mask filtering."""
    cfg = cfg or PipelineConfig()
    c = cfg.task3_uwb
    img = as_rgb(img)
    content_mask = as_mask(content_mask)
    if img.shape[:2] != content_mask.shape:
        raise DataError("image and content mask dimensions differ")
    if not (content_mask == 255).any():
        raise DataError("content mask is empty")

    lum = to_luminance(img)
    ink = task2_binarize_uwb(img, cfg)
    ink = make_mask((ink == 255) & (content_mask == 255))
    if not (ink == 255).any():
        log.info("task3_uwb: no ink inside the content mask")
        return as_points([])

    acc = lines.hough_transform(ink, c.theta_step_deg, c.rho_step)
    grid = lines.select_grid(
        acc,
        expected_min_lines=c.min_lines,
        angle_tol_deg=c.angle_tol_deg,
        spacing_tol=c.spacing_tol,
        peak_floor=c.peak_floor,
        min_period=c.min_period,
    )
    if grid is None:
        log.info("task3_uwb: no grid found")
        return as_points([])

    h, w = lum.shape
    pts = lines.line_intersections(grid, (0.0, 0.0, float(w), float(h)))
    # the cross arms run along the line directions, 90 deg off the normal
    cross_angle = np.rad2deg(grid.theta_a) + 90.0
    out = []
    for x, y in pts:
        res = lines.refine_intersection(
            lum,
            (x, y),
            cross_angle,
            method="template",
            window=c.refine_window,
            arm=c.template_arm,
            stroke=c.template_stroke,
            min_confidence=c.min_confidence,
        )
        out.append(res.point)
    out = as_points(out)
    keep = []
    for x, y in out:
        xi, yi = int(round(x)), int(round(y))
        if 0 <= xi < w and 0 <= yi < h and content_mask[yi, xi] == 255:
            keep.append((x, y))
    return as_points(keep)


# ---------------------------------------------------------------------------
# Task 3, CMM (Radon grid + closing refinement)

def _block_min_subsample(img: np.ndarray, s: int) -> np.ndarray:
    h, w = img.shape
    hs, ws = h // s, w // s
    return img[: hs * s, : ws * s].reshape(hs, s, ws, s).min(axis=(1, 3))


def _detect_frame(
    work: np.ndarray, c: Task3CmmConfig
) -> Tuple[np.ndarray, Tuple[int, int, int, int]]:
    """Frame mask (long axis-aligned dark lines) and the content bbox inside
    the innermost frame lines. Falls back to the full image when nothing
    frame-like is found."""
    h, w = work.shape
    t = thresh.otsu_threshold(thresh.histogram256(work))
    dark = thresh.binarize(work, t, "dark_fg")
    frame = np.zeros((h, w), dtype=bool)
    rows, cols = [], []
    for angle, min_len in ((0.0, int(c.frame_len_frac * w)), (90.0, int(c.frame_len_frac * h))):
        se = morph.line(max(min_len, 8), angle)
        bridged = morph.se_filter(dark, morph.line(9, angle), "close")
        long_runs = morph.se_filter(bridged, se, "open") == 255
        frame |= long_runs
        if angle == 0.0:
            rows = np.nonzero(long_runs.any(axis=1))[0]
        else:
            cols = np.nonzero(long_runs.any(axis=0))[0]
    bx0, by0, bx1, by1 = 0, 0, w - 1, h - 1
    mid_r, mid_c = h // 2, w // 2
    top = [r for r in rows if r < mid_r]
    bot = [r for r in rows if r > mid_r]
    lef = [x for x in cols if x < mid_c]
    rig = [x for x in cols if x > mid_c]
    pad = c.frame_stroke
    if top:
        by0 = max(top) + pad
    if bot:
        by1 = min(bot) - pad
    if lef:
        bx0 = max(lef) + pad
    if rig:
        bx1 = min(rig) - pad
    if bx1 - bx0 < w // 4 or by1 - by0 < h // 4:
        log.info("task3_cmm: frame detection implausible, using full extent")
        return np.zeros((h, w), dtype=bool), (0, 0, w - 1, h - 1)
    return frame, (bx0, by0, bx1, by1)


def _family_rhos(
    mask: np.ndarray, theta_deg: float, bbox, c: Task3CmmConfig
) -> Optional[Tuple[np.ndarray, float]]:
    """Line offsets of one family: Radon peaks completed to the full grid."""
    if not (mask == 255).any():
        return None
    sino = lines.radon_transform(mask, [theta_deg], rho_step=1.0)
    profile = sino.data[0]
    pos, _ = lines.profile_peaks(
        profile, floor_frac=c.radon_floor, min_separation=max(4.0, c.min_period / 2)
    )
    if len(pos) == 0:
        return None
    rhos = sino.rho_min + pos * sino.rho_step
    try:
        period = lines.grid_period(profile, c.min_period)
    except DataError as exc:
        log.info("task3_cmm: period estimation failed (%s)", exc)
        return None
    t = np.deg2rad(theta_deg)
    x0, y0, x1, y1 = bbox
    corners = [
        x * np.cos(t) + y * np.sin(t) for x in (x0, x1) for y in (y0, y1)
    ]
    inset = 3.0
    full = lines.complete_grid(rhos, period, (min(corners) + inset, max(corners) - inset))
    if len(full) == 0:
        return None
    return full, period


def task3_graticule_cmm(
    img: np.ndarray, cfg: Optional[PipelineConfig] = None
) -> np.ndarray:
    """Graticule intersections: subsampled directional analysis, Radon line
    positions with periodic completion, closing-based refinement, and
    inference of low-confidence points from their grid lines."""
    cfg = cfg or PipelineConfig()
    c = cfg.task3_cmm
    img = as_rgb(img)
    lum = to_luminance(img)
    s = max(1, c.subsample)

    eroded = morph.erode(lum, morph.square(max(1, c.pre_erosion)))
    work = _block_min_subsample(eroded, s) if s > 1 else eroded
    if min(work.shape) < 32:
        log.info("task3_cmm: image too small after subsampling")
        return as_points([])

    frame, bbox = _detect_frame(work, c)
    if frame.any():
        filler = morph.se_filter(work, morph.square(2 * c.frame_stroke + 3), "close")
        work = work.copy()
        grown = ndi.binary_dilation(frame, np.ones((3, 3), bool), iterations=2)
        work[grown] = filler[grown]

    angle, score = lines.best_direction(
        work,
        angle_min=c.angle_min,
        angle_max=c.angle_max,
        angle_step=c.angle_step,
        line_len=c.direction_line_len,
        tophat_size=c.direction_tophat,
    )
    if score <= 0:
        log.info("task3_cmm: no directional structure found")
        return as_points([])

    fams = []
    for fam_angle in (angle, angle + 90.0):
        closed = morph.directional_close(work, c.direction_line_len, fam_angle)
        bth = morph.top_hat(closed, morph.square(c.direction_tophat), "black")
        t = thresh.otsu_threshold(thresh.histogram256(bth))
        m = thresh.binarize(bth, t, "bright_fg") if bth.max() > 0 else None
        if m is None:
            log.info("task3_cmm: empty top-hat for family at %.1f deg", fam_angle)
            return as_points([])
        normal = (fam_angle + 90.0) % 180.0
        fam = _family_rhos(m, normal, bbox, c)
        if fam is None:
            log.info("task3_cmm: no line family at %.1f deg", fam_angle)
            return as_points([])
        fams.append((normal, fam))

    (na, (rhos_a, pa)), (nb, (rhos_b, pb)) = fams
    if len(rhos_a) + len(rhos_b) < 4:
        log.info("task3_cmm: fewer than four grid lines")
        return as_points([])
    grid = lines.GridModel(
        theta_a=np.deg2rad(na % 180.0),
        theta_b=np.deg2rad(nb % 180.0),
        rhos_a=rhos_a,
        rhos_b=rhos_b,
        ratings_a=np.zeros(len(rhos_a)),
        ratings_b=np.zeros(len(rhos_b)),
        period=float((pa + pb) / 2),
    )
    x0, y0, x1, y1 = bbox
    pts, ids = lines.line_intersections(
        grid, (float(x0), float(y0), float(x1) + 1.0, float(y1) + 1.0), with_ids=True
    )
    if len(pts) == 0:
        return as_points([])

    # refine at full scale with a rotated-cross closing
    shift = (s - 1) / 2.0
    full_pts = pts * s + shift
    h, w = lum.shape
    refined = np.zeros_like(full_pts)
    confident = np.zeros(len(full_pts), dtype=bool)
    for i, (x, y) in enumerate(full_pts):
        res = lines.refine_intersection(
            lum,
            (x, y),
            angle,
            method="closing",
            window=c.refine_window,
            cross_len=c.cross_len,
            contrast_min=c.contrast_min,
        )
        refined[i] = res.point
        confident[i] = res.refined
    filled_pts, filled = lines.infer_missing(refined, ids, confident)
    keep = filled & (filled_pts[:, 0] >= 0) & (filled_pts[:, 0] < w)
    keep &= (filled_pts[:, 1] >= 0) & (filled_pts[:, 1] < h)
    if not keep.all():
        log.info("task3_cmm: %d intersections dropped", int((~keep).sum()))
    return as_points(filled_pts[keep])
