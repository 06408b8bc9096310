"""Synthetic map-sheet generator with exact ground truth.

Sheets are built from analytic geometry first (rectangles, line
equations), then rasterized, so the truth containers are consistent with
the rendering by construction: block labels are the filled footprints that
were drawn, and graticule intersections are the closed-form solutions of
the line pairs that were drawn.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage as ndi

from .errors import DataError
from .raster import as_points, as_rgb, make_mask

_CORNERS = ("nw", "ne", "sw", "se")


@dataclass(frozen=True)
class GraticuleSpec:
    angle_deg: float = 3.0
    period: float = 150.0
    stroke: float = 2.0
    dash: Optional[Tuple[float, float]] = None  # (dash, gap) along the line
    ink: int = 45


@dataclass(frozen=True)
class BlockLayoutSpec:
    nx: int = 4
    ny: int = 4
    street: int = 16
    stroke: int = 2
    jitter: int = 3
    l_shape_every: int = 5  # every k-th block loses a quadrant
    hatch_every: int = 4  # every k-th block gets diagonal hatching
    hatch_spacing: int = 12
    ink: int = 45


@dataclass(frozen=True)
class RiverSpec:
    width: int = 56
    gray: int = 150
    island_block: bool = False  # draw one block mostly inside the river


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.0
    speck_density: float = 0.0  # extra dark specks per 10k pixels
    break_prob: float = 0.0  # fraction of ink pixels hit by white-outs


@dataclass(frozen=True)
class SheetSpec:
    width: int = 1024
    height: int = 1024
    margin: int = 72
    frame_offsets: Tuple[int, ...] = (0, 14)
    frame_strokes: Tuple[int, ...] = (3, 1)
    legend_boxes: Tuple[Tuple[str, int, int], ...] = (("ne", 150, 90),)
    blocks: Optional[BlockLayoutSpec] = field(default_factory=BlockLayoutSpec)
    graticule: Optional[GraticuleSpec] = field(default_factory=GraticuleSpec)
    river: Optional[RiverSpec] = None
    specks: int = 40
    speck_ink: int = 70
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    paper: int = 232
    frame_ink: int = 40
    seed: int = 0


@dataclass
class SheetTruth:
    content_mask: np.ndarray  # {0,255}
    blocks: np.ndarray  # int32 labels
    intersections: np.ndarray  # (N, 2) float64


def _content_rect(spec: SheetSpec) -> Tuple[int, int, int, int]:
    if len(spec.frame_offsets) != len(spec.frame_strokes):
        raise DataError("frame_offsets and frame_strokes must align")
    inset = spec.margin
    if spec.frame_offsets:
        k = int(np.argmax(spec.frame_offsets))
        inset += spec.frame_offsets[k] + spec.frame_strokes[k]
    x0, y0 = inset, inset
    x1, y1 = spec.width - 1 - inset, spec.height - 1 - inset
    if x1 - x0 < 32 or y1 - y0 < 32:
        raise DataError("layout infeasible: content area too small")
    return x0, y0, x1, y1


def _legend_rects(spec: SheetSpec, content) -> List[Tuple[int, int, int, int]]:
    cx0, cy0, cx1, cy1 = content
    rects = []
    for corner, w, h in spec.legend_boxes:
        if corner not in _CORNERS:
            raise DataError(f"unknown legend corner {corner!r}")
        x0 = cx0 if "w" in corner else cx1 - w + 1
        y0 = cy0 if "n" in corner else cy1 - h + 1
        rects.append((x0, y0, x0 + w - 1, y0 + h - 1))
    return rects


def _rect_mask(shape, rect) -> np.ndarray:
    m = np.zeros(shape, dtype=bool)
    x0, y0, x1, y1 = rect
    m[y0 : y1 + 1, x0 : x1 + 1] = True
    return m


def _graticule_lines(spec: SheetSpec, content):
    """(theta, rho) per family, anchored so one line crosses the content center."""
    g = spec.graticule
    cx0, cy0, cx1, cy1 = content
    cx, cy = (cx0 + cx1) / 2.0, (cy0 + cy1) / 2.0
    corners = [(cx0, cy0), (cx1, cy0), (cx0, cy1), (cx1, cy1)]
    fams = []
    for fam_angle in (g.angle_deg + 90.0, g.angle_deg):  # normals of A then B
        t = np.deg2rad(fam_angle % 180.0)
        rc = cx * np.cos(t) + cy * np.sin(t)
        proj = [px * np.cos(t) + py * np.sin(t) for px, py in corners]
        margin = 2.0 * g.stroke + 4.0
        k0 = int(np.ceil((min(proj) + margin - rc) / g.period))
        k1 = int(np.floor((max(proj) - margin - rc) / g.period))
        fams.append((t, rc + np.arange(k0, k1 + 1) * g.period))
    return fams


def _draw_lines(canvas, fams, content, g: GraticuleSpec):
    cx0, cy0, cx1, cy1 = content
    yy, xx = np.mgrid[cy0 : cy1 + 1, cx0 : cx1 + 1]
    sub = canvas[cy0 : cy1 + 1, cx0 : cx1 + 1]
    for t, rhos in fams:
        c, s = np.cos(t), np.sin(t)
        proj = xx * c + yy * s
        along = -xx * s + yy * c
        for rho in rhos:
            band = np.abs(proj - rho) <= g.stroke / 2.0
            if g.dash is not None:
                dash, gap = g.dash
                band &= (along % (dash + gap)) < dash
            sub[band] = g.ink
    canvas[cy0 : cy1 + 1, cx0 : cx1 + 1] = sub


def _block_regions(spec: SheetSpec, content, legend_rects, river_band, rng):
    """Boolean footprint per block, laid out on a jittered grid."""
    b = spec.blocks
    cx0, cy0, cx1, cy1 = content
    ux0, uy0 = cx0 + b.street, cy0 + b.street
    ux1, uy1 = cx1 - b.street, cy1 - b.street
    cw = (ux1 - ux0 + 1) / b.nx
    ch = (uy1 - uy0 + 1) / b.ny
    if cw < 2 * b.street + 2 * b.jitter + 8 or ch < 2 * b.street + 2 * b.jitter + 8:
        raise DataError("layout infeasible: blocks overflow the content area")
    shape = (spec.height, spec.width)
    regions = []
    idx = 0
    for iy in range(b.ny):
        for ix in range(b.nx):
            x0 = int(ux0 + ix * cw + b.street // 2)
            x1 = int(ux0 + (ix + 1) * cw - 1 - b.street // 2)
            y0 = int(uy0 + iy * ch + b.street // 2)
            y1 = int(uy0 + (iy + 1) * ch - 1 - b.street // 2)
            jit = rng.integers(-b.jitter, b.jitter + 1, size=4)
            x0, y0 = x0 + int(jit[0]), y0 + int(jit[1])
            x1, y1 = x1 + int(jit[2]), y1 + int(jit[3])
            idx += 1
            grow = b.street // 2
            near = (x0 - grow, y0 - grow, x1 + grow, y1 + grow)
            if any(_rects_overlap(near, lr) for lr in legend_rects):
                continue
            if river_band is not None and river_band[y0:y1 + 1, x0:x1 + 1].any():
                continue
            region = _rect_mask(shape, (x0, y0, x1, y1))
            if b.l_shape_every and idx % b.l_shape_every == 0:
                region[(y0 + y1) // 2 : y1 + 1, (x0 + x1) // 2 : x1 + 1] = False
            regions.append(region)
    return regions


def _rects_overlap(a, b) -> bool:
    return not (a[2] < b[0] or b[2] < a[0] or a[3] < b[1] or b[3] < a[1])


def _river_band(spec: SheetSpec, content, rng) -> Optional[np.ndarray]:
    if spec.river is None:
        return None
    r = spec.river
    cx0, cy0, cx1, cy1 = content
    h3 = (cy1 - cy0) // 4
    ymid = (cy0 + cy1) // 2
    pts = np.array(
        [
            (cx0, ymid + int(rng.integers(-h3, h3))),
            ((cx0 + cx1) // 2, ymid + int(rng.integers(-h3, h3))),
            (cx1, ymid + int(rng.integers(-h3, h3))),
        ],
        dtype=np.float64,
    )
    yy, xx = np.mgrid[0 : spec.height, 0 : spec.width]
    band = np.zeros((spec.height, spec.width), dtype=bool)
    for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
        d = np.hypot(x1 - x0, y1 - y0)
        ux, uy = (x1 - x0) / d, (y1 - y0) / d
        t = np.clip((xx - x0) * ux + (yy - y0) * uy, 0, d)
        dist = np.hypot(xx - (x0 + t * ux), yy - (y0 + t * uy))
        band |= dist <= r.width / 2.0
    band &= _rect_mask(band.shape, content)
    return band


def generate(spec: SheetSpec) -> Tuple[np.ndarray, SheetTruth]:
    """Render a sheet and its ground truth. Deterministic given spec.seed."""
    rng = np.random.default_rng(spec.seed)
    shape = (spec.height, spec.width)
    canvas = np.full(shape, spec.paper, dtype=np.int16)
    content = _content_rect(spec)
    cx0, cy0, cx1, cy1 = content
    legend_rects = _legend_rects(spec, content)

    river_band = _river_band(spec, content, rng)
    if river_band is not None:
        canvas[river_band] = spec.river.gray

    labels = np.zeros(shape, dtype=np.int32)
    if spec.blocks is not None:
        regions = _block_regions(spec, content, legend_rects, river_band, rng)
        if spec.river is not None and spec.river.island_block:
            regions.append(_island_block(spec, river_band))
        b = spec.blocks
        struct = np.ones((3, 3), dtype=bool)
        for k, region in enumerate(regions, start=1):
            inner = ndi.binary_erosion(region, struct, iterations=b.stroke)
            canvas[region & ~inner] = b.ink
            if b.hatch_every and k % b.hatch_every == 0:
                yy, xx = np.nonzero(inner)
                on = ((xx + yy) % b.hatch_spacing) < 1
                canvas[yy[on], xx[on]] = b.ink
            labels[region] = k

    if spec.specks > 0:
        sy = rng.integers(cy0 + 4, cy1 - 4, size=spec.specks)
        sx = rng.integers(cx0 + 4, cx1 - 4, size=spec.specks)
        ss = rng.integers(2, 5, size=spec.specks)
        for x, y, s in zip(sx, sy, ss):
            canvas[y : y + s, x : x + s] = spec.speck_ink

    intersections = np.zeros((0, 2))
    if spec.graticule is not None:
        fams = _graticule_lines(spec, content)
        _draw_lines(canvas, fams, content, spec.graticule)
        (ta, rhos_a), (tb, rhos_b) = fams
        pts = []
        for ra in rhos_a:
            for rb in rhos_b:
                det = np.cos(ta) * np.sin(tb) - np.sin(ta) * np.cos(tb)
                x = (ra * np.sin(tb) - rb * np.sin(ta)) / det
                y = (rb * np.cos(ta) - ra * np.cos(tb)) / det
                if not (cx0 <= x <= cx1 and cy0 <= y <= cy1):
                    continue
                if any(
                    lx0 <= x <= lx1 and ly0 <= y <= ly1
                    for lx0, ly0, lx1, ly1 in legend_rects
                ):
                    continue
                pts.append((x, y))
        intersections = as_points(pts)

    for rect in legend_rects:
        x0, y0, x1, y1 = rect
        canvas[y0 : y1 + 1, x0 : x1 + 1] = spec.paper
        box = _rect_mask(shape, rect)
        inner = ndi.binary_erosion(box, np.ones((3, 3), bool), iterations=2)
        canvas[box & ~inner] = spec.frame_ink

    for off, stroke in zip(spec.frame_offsets, spec.frame_strokes):
        x0 = spec.margin + off
        y0 = spec.margin + off
        x1 = spec.width - 1 - spec.margin - off
        y1 = spec.height - 1 - spec.margin - off
        outer = _rect_mask(shape, (x0, y0, x1, y1))
        inner = ndi.binary_erosion(outer, np.ones((3, 3), bool), iterations=stroke)
        canvas[outer & ~inner] = spec.frame_ink

    n = spec.noise
    if n.speck_density > 0:
        count = int(n.speck_density * spec.width * spec.height / 10_000)
        ys = rng.integers(0, spec.height - 2, size=count)
        xs = rng.integers(0, spec.width - 2, size=count)
        for x, y in zip(xs, ys):
            canvas[y : y + 2, x : x + 2] = 60
    if n.break_prob > 0:
        ink_mask = canvas < 180
        yy, xx = np.nonzero(ink_mask)
        if len(xx):
            count = int(n.break_prob * len(xx) / 8)
            pick = rng.integers(0, len(xx), size=count)
            for i in pick:
                y, x = yy[i], xx[i]
                canvas[max(y - 1, 0) : y + 2, max(x - 1, 0) : x + 2] = spec.paper
    if n.sigma > 0:
        canvas = canvas + rng.normal(0.0, n.sigma, size=shape)

    gray = np.clip(np.floor(canvas + 0.5), 0, 255).astype(np.uint8)
    rgb = np.repeat(gray[:, :, None], 3, axis=2)

    content_mask = _rect_mask(shape, content)
    for rect in legend_rects:
        content_mask &= ~_rect_mask(shape, rect)
    truth = SheetTruth(
        content_mask=make_mask(content_mask),
        blocks=labels,
        intersections=intersections,
    )
    return as_rgb(rgb), truth


def _island_block(spec: SheetSpec, river_band: np.ndarray) -> np.ndarray:
    """A block placed on the river so most of it overlaps the band."""
    ys, xs = np.nonzero(river_band)
    cyc, cxc = int(np.median(ys)), int(np.median(xs))
    half = max(spec.river.width // 2, 16)
    rect = (cxc - half, cyc - half // 2, cxc + half, cyc + half // 2)
    return _rect_mask(river_band.shape, rect)


def corrupt(img: np.ndarray, level: float, seed: int = 0) -> np.ndarray:
    """Apply stroke breaks, specks and intensity noise scaled by level.

    level 0 returns an identical copy; the ground truth of the source
    sheet is unchanged by construction.
    """
    img = as_rgb(img)
    if not 0.0 <= level <= 1.0:
        raise DataError("corruption level must be in [0, 1]")
    if level == 0.0:
        return img.copy()
    rng = np.random.default_rng(seed)
    gray = img[:, :, 0].astype(np.int16)
    h, w = gray.shape
    paper = int(np.median(gray))

    ink_mask = gray < paper - 40
    yy, xx = np.nonzero(ink_mask)
    if len(xx):
        count = int(level * len(xx) / 60)
        pick = rng.integers(0, len(xx), size=count)
        rad = rng.integers(1, 3, size=count)
        for i, r in zip(pick, rad):
            y, x = int(yy[i]), int(xx[i])
            gray[max(y - r, 0) : y + r + 1, max(x - r, 0) : x + r + 1] = paper

    count = int(level * h * w / 4000)
    ys = rng.integers(0, h - 2, size=count)
    xs = rng.integers(0, w - 2, size=count)
    for x, y in zip(xs, ys):
        gray[y : y + 2, x : x + 2] = 55

    if level > 0:
        gray = gray + rng.normal(0.0, 12.0 * level, size=gray.shape)
    out = np.clip(np.floor(gray + 0.5), 0, 255).astype(np.uint8)
    return np.repeat(out[:, :, None], 3, axis=2)
