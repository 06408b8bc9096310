"""Line-structure extraction: Hough/Radon accumulators, grid-model
selection, periodicity estimation, and sub-pixel intersection refinement.

All lines use the normal form x cos(theta) + y sin(theta) = rho with
theta in [0, pi), x = column and y = row of the pixel center. Angles in
public signatures are degrees; dataclass fields store radians.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage as ndi
from scipy.signal import fftconvolve

from . import morph, thresh
from .errors import DataError
from .raster import as_gray, as_mask, as_points

log = logging.getLogger(__name__)

_TWO_PI = 2.0 * np.pi


def _circ_dist(a: float, b: float) -> float:
    """Distance between two undirected line angles (mod pi)."""
    d = abs(a - b) % np.pi
    return min(d, np.pi - d)


# ---------------------------------------------------------------------------
# accumulators

@dataclass
class HoughAccumulator:
    counts: np.ndarray  # (n_theta, n_rho) int64
    thetas: np.ndarray  # radians
    theta_step: float
    rho_step: float
    rho_min: float

    def rho_of_bin(self, b: float) -> float:
        return self.rho_min + b * self.rho_step


@dataclass
class RadonSinogram:
    data: np.ndarray  # (n_angles, n_rho) float64
    angles: np.ndarray  # radians
    rho_step: float
    rho_min: float

    def rho_of_bin(self, b: float) -> float:
        return self.rho_min + b * self.rho_step


@dataclass(frozen=True)
class LineParam:
    theta: float  # radians in [0, pi)
    rho: float
    rating: float = 0.0


def _rho_range(shape: Tuple[int, int], thetas: np.ndarray) -> Tuple[float, float]:
    h, w = shape
    xs = np.array([0.0, w - 1.0, 0.0, w - 1.0])
    ys = np.array([0.0, 0.0, h - 1.0, h - 1.0])
    rhos = xs[None, :] * np.cos(thetas)[:, None] + ys[None, :] * np.sin(thetas)[:, None]
    return float(rhos.min()), float(rhos.max())


def hough_transform(
    mask: np.ndarray, theta_step_deg: float = 0.25, rho_step: float = 1.0
) -> HoughAccumulator:
    """Vote every foreground pixel into the nearest rho bin for each theta."""
    mask = as_mask(mask)
    if theta_step_deg <= 0 or rho_step <= 0:
        raise DataError("hough steps must be positive")
    ys, xs = np.nonzero(mask == 255)
    if len(xs) == 0:
        raise DataError("hough transform of an empty mask")
    thetas = np.deg2rad(np.arange(0.0, 180.0, theta_step_deg))
    rho_min, rho_max = _rho_range(mask.shape, thetas)
    n_rho = int(np.floor((rho_max - rho_min) / rho_step + 0.5)) + 1
    counts = np.zeros((len(thetas), n_rho), dtype=np.int64)
    xs = xs.astype(np.float64)
    ys = ys.astype(np.float64)
    for i, t in enumerate(thetas):
        rho = xs * np.cos(t) + ys * np.sin(t)
        bins = np.floor((rho - rho_min) / rho_step + 0.5).astype(np.int64)
        counts[i] = np.bincount(bins, minlength=n_rho)
    return HoughAccumulator(
        counts=counts,
        thetas=thetas,
        theta_step=np.deg2rad(theta_step_deg),
        rho_step=rho_step,
        rho_min=rho_min,
    )


def radon_transform(
    img: np.ndarray, angles_deg: Sequence[float], rho_step: float = 1.0
) -> RadonSinogram:
    """Sum intensities along lines: one projection profile per angle.

    Nearest-bin accumulation, so every profile conserves the total image
    mass exactly.
    """
    img = as_gray(img)
    if len(angles_deg) == 0:
        raise DataError("radon transform needs at least one angle")
    angles = np.deg2rad(np.asarray(angles_deg, dtype=np.float64)) % np.pi
    h, w = img.shape
    yy, xx = np.nonzero(img > 0)
    vals = img[yy, xx].astype(np.float64)
    rho_min, rho_max = _rho_range(img.shape, angles)
    n_rho = int(np.floor((rho_max - rho_min) / rho_step + 0.5)) + 1
    data = np.zeros((len(angles), n_rho), dtype=np.float64)
    for i, t in enumerate(angles):
        rho = xx * np.cos(t) + yy * np.sin(t)
        bins = np.floor((rho - rho_min) / rho_step + 0.5).astype(np.int64)
        data[i] = np.bincount(bins, weights=vals, minlength=n_rho)
    return RadonSinogram(data=data, angles=angles, rho_step=rho_step, rho_min=rho_min)


# ---------------------------------------------------------------------------
# peak extraction

def _parabolic_offset(ym: float, y0: float, yp: float) -> float:
    denom = ym - 2.0 * y0 + yp
    if abs(denom) < 1e-12:
        return 0.0
    off = 0.5 * (ym - yp) / denom
    return float(np.clip(off, -0.5, 0.5))


def profile_peaks(
    profile: np.ndarray,
    floor_frac: float = 0.3,
    min_separation: float = 4.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """Local maxima of a 1-D profile above floor_frac * max, NMS-separated.

    Returns (positions, ratings) with sub-bin parabolic refinement,
    positions sorted ascending.
    """
    p = np.asarray(profile, dtype=np.float64)
    if p.size < 3 or p.max() <= 0:
        return np.zeros(0), np.zeros(0)
    floor = floor_frac * p.max()
    cand = [
        i
        for i in range(1, len(p) - 1)
        if p[i] >= p[i - 1] and p[i] >= p[i + 1] and p[i] > floor
    ]
    cand.sort(key=lambda i: (-p[i], i))
    kept: List[int] = []
    for i in cand:
        if all(abs(i - j) >= min_separation for j in kept):
            kept.append(i)
    kept.sort()
    pos = np.array(
        [i + _parabolic_offset(p[i - 1], p[i], p[i + 1]) for i in kept]
    )
    return pos, p[kept]


def _acc_peaks(
    acc: HoughAccumulator, floor_frac: float, nms_theta: int, nms_rho: float
) -> List[LineParam]:
    c = acc.counts
    peak_max = c.max()
    if peak_max <= 0:
        return []
    floor = floor_frac * peak_max
    mx = ndi.maximum_filter(c, size=3, mode="constant", cval=0)
    ti, ri = np.nonzero((c >= mx) & (c > floor))
    order = np.lexsort((ri, ti, -c[ti, ri]))
    kept: List[Tuple[int, int]] = []
    out: List[LineParam] = []
    for k in order:
        t, r = int(ti[k]), int(ri[k])
        if any(
            abs(t - t2) <= nms_theta and abs(r - r2) <= nms_rho for t2, r2 in kept
        ):
            continue
        kept.append((t, r))
        if 0 < r < c.shape[1] - 1:
            off = _parabolic_offset(c[t, r - 1], c[t, r], c[t, r + 1])
        else:
            off = 0.0
        out.append(
            LineParam(
                theta=float(acc.thetas[t]),
                rho=acc.rho_of_bin(r + off),
                rating=float(c[t, r]),
            )
        )
    return out


# ---------------------------------------------------------------------------
# grid model

@dataclass
class GridModel:
    """Two perpendicular, equally spaced line families."""

    theta_a: float  # normal angle of family A, radians in [0, pi)
    theta_b: float
    rhos_a: np.ndarray
    rhos_b: np.ndarray
    ratings_a: np.ndarray
    ratings_b: np.ndarray
    period: float
    rating: float = 0.0

    def __post_init__(self):
        if self.period <= 0:
            raise DataError("grid period must be positive")
        if _circ_dist(self.theta_b, self.theta_a + np.pi / 2) > np.deg2rad(10):
            raise DataError("grid families must be perpendicular")
        if len(self.rhos_a) + len(self.rhos_b) < 4:
            raise DataError("grid needs at least four lines")


def _cluster_by_angle(
    peaks: List[LineParam], tol: float
) -> List[dict]:
    """Greedy angle clustering mod pi; members get wrap-normalized rhos."""
    clusters: List[dict] = []
    for pk in sorted(peaks, key=lambda p: (-p.rating, p.theta, p.rho)):
        best = None
        best_d = tol
        for cl in clusters:
            d = _circ_dist(pk.theta, cl["angle"])
            if d <= best_d:
                best, best_d = cl, d
        theta, rho = pk.theta, pk.rho
        if best is None:
            clusters.append(
                {"angle": theta, "weight": pk.rating, "members": [(theta, rho, pk.rating)]}
            )
            continue
        # normalize the representative so it sits within pi/2 of the cluster
        if abs(theta - best["angle"]) > np.pi / 2:
            theta = theta - np.pi if theta > best["angle"] else theta + np.pi
            rho = -rho
        w = best["weight"] + pk.rating
        best["angle"] = (best["angle"] * best["weight"] + theta * pk.rating) / w
        best["weight"] = w
        best["members"].append((theta, rho, pk.rating))
    return clusters


def _fit_progression(
    rhos: np.ndarray, ratings: np.ndarray, period: float, tol: float
) -> Optional[dict]:
    """Best arithmetic progression of the given period through the rhos."""
    if len(rhos) < 2 or period <= 0:
        return None
    order = np.argsort(rhos)
    rhos = rhos[order]
    ratings = ratings[order]
    k = np.floor((rhos - rhos[0]) / period + 0.5)
    # refine period and anchor by least squares over the indexed members
    if len(np.unique(k)) >= 2:
        a = np.vstack([k, np.ones_like(k)]).T
        sol, *_ = np.linalg.lstsq(a, rhos, rcond=None)
        per, anchor = float(sol[0]), float(sol[1])
        if per <= 0:
            return None
    else:
        per, anchor = period, float(np.mean(rhos - k * period))
    resid = np.abs(rhos - (anchor + k * per))
    aligned = resid <= tol
    if aligned.sum() < 2:
        return None
    k_al = k[aligned]
    uniq = np.unique(k_al)
    span = int(uniq.max() - uniq.min()) + 1
    inserted = span - len(uniq)
    return {
        "period": per,
        "anchor": anchor,
        "k": k_al,
        "rhos": rhos[aligned],
        "ratings": ratings[aligned],
        "inserted": inserted,
        "rating_sum": float(ratings[aligned].sum()),
    }


def _family_lines(fit: dict) -> Tuple[np.ndarray, np.ndarray]:
    """Full progression over the detected span, fixed members at rating 0."""
    uniq = np.unique(fit["k"])
    ks = np.arange(int(uniq.min()), int(uniq.max()) + 1)
    rhos = fit["anchor"] + ks * fit["period"]
    ratings = np.zeros(len(ks))
    for kk, rr, rat in zip(fit["k"], fit["rhos"], fit["ratings"]):
        i = int(kk - uniq.min())
        rhos[i] = rr
        ratings[i] = rat
    return rhos, ratings


def select_grid(
    acc: HoughAccumulator,
    expected_min_lines: int = 4,
    angle_tol_deg: float = 2.0,
    spacing_tol: float = 3.0,
    peak_floor: float = 0.3,
    min_period: float = 10.0,
    miss_penalty: Optional[float] = None,
) -> Optional[GridModel]:
    """Pick the best pair of perpendicular, equally spaced line families.

    Peaks above an adaptive floor are clustered by angle; for the cluster
    pairs closest to perpendicular, an arithmetic rho progression with a
    period shared by both families is fitted, missing members are inserted
    at zero rating, and the candidate score is the member rating sum minus
    a penalty per inserted line. Returns None when no admissible model
    reaches `expected_min_lines` detected lines.
    """
    tol = np.deg2rad(angle_tol_deg)
    peaks = _acc_peaks(
        acc,
        floor_frac=peak_floor,
        nms_theta=max(1, int(round(tol / acc.theta_step))),
        nms_rho=max(1.0, min_period / (2 * acc.rho_step)),
    )
    if len(peaks) < expected_min_lines:
        log.info("select_grid: only %d peaks above floor", len(peaks))
        return None
    clusters = [c for c in _cluster_by_angle(peaks, tol) if len(c["members"]) >= 2]
    best_model = None
    best_score = -np.inf
    for i in range(len(clusters)):
        for j in range(i + 1, len(clusters)):
            ca, cb = clusters[i], clusters[j]
            if _circ_dist(ca["angle"], cb["angle"] + np.pi / 2) > tol:
                continue
            if ca["angle"] % np.pi > cb["angle"] % np.pi:
                ca, cb = cb, ca
            ra = np.array([m[1] for m in ca["members"]])
            ga = np.array([m[2] for m in ca["members"]])
            rb = np.array([m[1] for m in cb["members"]])
            gb = np.array([m[2] for m in cb["members"]])
            diffs = np.concatenate([np.diff(np.sort(ra)), np.diff(np.sort(rb))])
            cands = set()
            for d in diffs:
                for div in (1, 2, 3):
                    c = abs(d) / div
                    if c >= min_period:
                        cands.add(round(c, 1))
            for cand in sorted(cands):
                fa = _fit_progression(ra, ga, cand, spacing_tol)
                fb = _fit_progression(rb, gb, cand, spacing_tol)
                if fa is None or fb is None:
                    continue
                per = 0.5 * (fa["period"] + fb["period"])
                if abs(fa["period"] - fb["period"]) > spacing_tol:
                    continue
                n_detected = len(fa["rhos"]) + len(fb["rhos"])
                if n_detected < expected_min_lines:
                    continue
                members = np.concatenate([fa["ratings"], fb["ratings"]])
                lam = miss_penalty if miss_penalty is not None else float(members.mean())
                score = float(members.sum()) - lam * (fa["inserted"] + fb["inserted"])
                if score > best_score:
                    rhos_a, ratings_a = _family_lines(fa)
                    rhos_b, ratings_b = _family_lines(fb)
                    best_model = GridModel(
                        theta_a=ca["angle"] % np.pi,
                        theta_b=cb["angle"] % np.pi,
                        rhos_a=rhos_a,
                        rhos_b=rhos_b,
                        ratings_a=ratings_a,
                        ratings_b=ratings_b,
                        period=per,
                        rating=score,
                    )
                    best_score = score
    if best_model is None:
        log.info("select_grid: no admissible grid model")
    return best_model


# ---------------------------------------------------------------------------
# direction sweep, periodicity, completion

def _longest_row_run(mask: np.ndarray) -> int:
    if not mask.any():
        return 0
    pad = np.zeros((mask.shape[0], 1), dtype=bool)
    arr = np.hstack([pad, mask, pad]).astype(np.int8)
    d = np.diff(arr, axis=1)
    xs = np.nonzero(d == 1)[1]
    xe = np.nonzero(d == -1)[1]
    return int((xe - xs).max())


def longest_run(mask: np.ndarray, angle_deg: float) -> int:
    """Longest foreground run along the given direction (after 1-px closing
    of digitization jogs via a 3x3 dilation and nearest-neighbor rotation)."""
    mask = as_mask(mask)
    fat = ndi.maximum_filter(mask, size=3, mode="constant", cval=0)
    if angle_deg % 180.0 == 0.0:
        return _longest_row_run(fat == 255)
    rot = ndi.rotate(fat, angle_deg, reshape=True, order=0, mode="constant", cval=0)
    return _longest_row_run(rot == 255)


def best_direction(
    img: np.ndarray,
    angle_min: float = 0.0,
    angle_max: float = 30.0,
    angle_step: float = 1.0,
    line_len: int = 25,
    tophat_size: int = 5,
) -> Tuple[float, int]:
    """Angle in [angle_min, angle_max] whose closed image keeps the longest
    dark line.

    For each angle the image is closed with a line SE (wiping dark
    structures not aligned with it), thin dark leftovers are pulled out
    with an isotropic black top-hat, Otsu-binarized, and the longest run
    along the angle is measured. Ties go to the smallest angle; a blank
    response yields (angle_min, 0), which callers should treat as
    low-confidence.
    """
    img = as_gray(img)
    best_angle, best_score = float(angle_min), -1
    for a in np.arange(angle_min, angle_max + angle_step / 2, angle_step):
        closed = morph.directional_close(img, line_len, float(a))
        bth = morph.top_hat(closed, morph.square(tophat_size), "black")
        t = thresh.otsu_threshold(thresh.histogram256(bth))
        m = thresh.binarize(bth, t, "bright_fg")
        score = longest_run(m, float(a))
        if score > best_score:
            best_angle, best_score = float(a), score
    return best_angle, max(best_score, 0)


def grid_period(
    profile: np.ndarray, min_period: int, max_lag: Optional[int] = None
) -> float:
    """Dominant period of a 1-D profile via unbiased autocorrelation.

    Searches lags in [min_period, len/2] and refines the winning lag with
    parabolic interpolation.
    """
    p = np.asarray(profile, dtype=np.float64)
    if min_period < 1:
        raise DataError("min_period must be >= 1")
    if len(p) < 2 * min_period:
        raise DataError("profile too short for the requested period range")
    p = p - p.mean()
    if p.std() < 1e-9:
        raise DataError("profile has no structure; period undefined")
    n = len(p)
    hi = min(n // 2, max_lag if max_lag is not None else n // 2)
    lags = np.arange(min_period, hi + 1)
    ac = np.array([(p[:-k] * p[k:]).sum() / (n - k) for k in lags])
    best = int(np.argmax(ac))
    k = lags[best]
    if 0 < best < len(ac) - 1:
        k = k + _parabolic_offset(ac[best - 1], ac[best], ac[best + 1])
    return float(k)


def complete_grid(
    rhos: Sequence[float], period: float, extent: Tuple[float, float]
) -> np.ndarray:
    """Snap detected rhos to a progression and extend it across the extent.

    The progression is anchored at the median phase of the detections
    (relative to the first rho, wrapped to +-period/2).
    """
    rhos = np.asarray(rhos, dtype=np.float64)
    if len(rhos) == 0:
        raise DataError("complete_grid needs at least one detected rho")
    if period <= 0:
        raise DataError("period must be positive")
    d = (rhos - rhos[0] + period / 2) % period - period / 2
    anchor = rhos[0] + float(np.median(d))
    lo, hi = extent
    k0 = int(np.ceil((lo - anchor) / period - 1e-9))
    k1 = int(np.floor((hi - anchor) / period + 1e-9))
    if k1 < k0:
        return np.zeros(0)
    return anchor + np.arange(k0, k1 + 1) * period


# ---------------------------------------------------------------------------
# intersections

def _intersect_normal(
    theta_a: float, rho_a: float, theta_b: float, rho_b: float
) -> Optional[Tuple[float, float]]:
    det = np.cos(theta_a) * np.sin(theta_b) - np.sin(theta_a) * np.cos(theta_b)
    if abs(det) < 1e-9:
        return None
    x = (rho_a * np.sin(theta_b) - rho_b * np.sin(theta_a)) / det
    y = (rho_b * np.cos(theta_a) - rho_a * np.cos(theta_b)) / det
    return float(x), float(y)


def line_intersections(
    grid: GridModel,
    bounds: Tuple[float, float, float, float],
    with_ids: bool = False,
):
    """All pairwise family-A x family-B intersections inside the bounds.

    bounds is (xmin, ymin, xmax, ymax), max-exclusive. With with_ids=True
    also returns the (a index, b index) pair per point.
    """
    xmin, ymin, xmax, ymax = bounds
    pts = []
    ids = []
    for i, ra in enumerate(grid.rhos_a):
        for j, rb in enumerate(grid.rhos_b):
            p = _intersect_normal(grid.theta_a, ra, grid.theta_b, rb)
            if p is None:
                log.warning("near-parallel line pair skipped (a=%d, b=%d)", i, j)
                continue
            x, y = p
            if xmin <= x < xmax and ymin <= y < ymax:
                pts.append((x, y))
                ids.append((i, j))
    pts = as_points(pts)
    if with_ids:
        return pts, np.asarray(ids, dtype=np.int64).reshape(-1, 2)
    return pts


# ---------------------------------------------------------------------------
# refinement

@dataclass(frozen=True)
class RefineResult:
    point: Tuple[float, float]
    confidence: float
    refined: bool


def _cross_template(arm: int, stroke: float, angle_deg: float) -> np.ndarray:
    """Dark cross (0) on paper (1): two perpendicular strokes of length
    2*arm+1 through the center, rotated by angle_deg."""
    size = 2 * arm + 1
    a = np.deg2rad(angle_deg)
    c, s = np.cos(a), np.sin(a)
    ii, jj = np.mgrid[0:size, 0:size]
    u = (jj - arm).astype(np.float64)
    v = (ii - arm).astype(np.float64)
    along = u * c + v * s
    across = -u * s + v * c
    on_a = (np.abs(across) <= stroke / 2) & (np.abs(along) <= arm)
    on_b = (np.abs(along) <= stroke / 2) & (np.abs(across) <= arm)
    return np.where(on_a | on_b, 0.0, 1.0)


def _subpixel_extremum(surface: np.ndarray, iy: int, ix: int) -> Tuple[float, float]:
    dx = dy = 0.0
    if 0 < ix < surface.shape[1] - 1:
        dx = _parabolic_offset(
            surface[iy, ix - 1], surface[iy, ix], surface[iy, ix + 1]
        )
    if 0 < iy < surface.shape[0] - 1:
        dy = _parabolic_offset(
            surface[iy - 1, ix], surface[iy, ix], surface[iy + 1, ix]
        )
    return dx, dy


def _refine_template(
    img: np.ndarray,
    cx: float,
    cy: float,
    angle_deg: float,
    window: int,
    arm: int,
    stroke: float,
    min_confidence: float,
) -> RefineResult:
    h, w = img.shape
    tpl = _cross_template(arm, stroke, angle_deg)
    tpl = tpl - tpl.mean()
    tnorm = float(np.sqrt((tpl * tpl).sum()))
    icx, icy = int(round(cx)), int(round(cy))
    x0 = max(icx - window - arm, 0)
    x1 = min(icx + window + arm + 1, w)
    y0 = max(icy - window - arm, 0)
    y1 = min(icy + window + arm + 1, h)
    region = img[y0:y1, x0:x1].astype(np.float64)
    size = 2 * arm + 1
    if region.shape[0] < size or region.shape[1] < size or tnorm < 1e-12:
        return RefineResult((cx, cy), 0.0, False)
    cross_corr = fftconvolve(region, tpl[::-1, ::-1], mode="valid")
    ones = np.ones_like(tpl)
    s1 = fftconvolve(region, ones, mode="valid")
    s2 = fftconvolve(region * region, ones, mode="valid")
    n = size * size
    var = np.maximum(s2 - s1 * s1 / n, 0.0)
    denom = np.sqrt(var) * tnorm
    with np.errstate(divide="ignore", invalid="ignore"):
        ncc = np.where(denom > 1e-9, cross_corr / denom, -np.inf)
    # restrict candidate centers to +-window around the coarse point
    ccx = np.arange(x0 + arm, x1 - arm)
    ccy = np.arange(y0 + arm, y1 - arm)
    ok_x = np.abs(ccx - icx) <= window
    ok_y = np.abs(ccy - icy) <= window
    ncc = np.where(ok_y[:, None] & ok_x[None, :], ncc, -np.inf)
    if not np.isfinite(ncc).any():
        return RefineResult((cx, cy), 0.0, False)
    iy, ix = np.unravel_index(int(np.argmax(ncc)), ncc.shape)
    conf = float(ncc[iy, ix])
    if conf < min_confidence:
        return RefineResult((cx, cy), conf, False)
    finite = np.where(np.isfinite(ncc), ncc, np.nanmin(ncc[np.isfinite(ncc)]))
    dx, dy = _subpixel_extremum(finite, iy, ix)
    return RefineResult((float(ccx[ix] + dx), float(ccy[iy] + dy)), conf, True)


def _refine_closing(
    img: np.ndarray,
    cx: float,
    cy: float,
    angle_deg: float,
    window: int,
    cross_len: int,
    contrast_min: int,
) -> RefineResult:
    h, w = img.shape
    se = morph.rotated_cross(cross_len, angle_deg)
    pad = max(max(abs(dx), abs(dy)) for dx, dy in se.offsets) + 1
    icx, icy = int(round(cx)), int(round(cy))
    x0 = max(icx - window - pad, 0)
    x1 = min(icx + window + pad + 1, w)
    y0 = max(icy - window - pad, 0)
    y1 = min(icy + window + pad + 1, h)
    if x1 - x0 < 3 or y1 - y0 < 3:
        return RefineResult((cx, cy), 0.0, False)
    closed = morph.se_filter(img[y0:y1, x0:x1], se, "close")
    bx0 = max(icx - window, 0) - x0
    bx1 = min(icx + window, w - 1) - x0
    by0 = max(icy - window, 0) - y0
    by1 = min(icy + window, h - 1) - y0
    box = closed[by0 : by1 + 1, bx0 : bx1 + 1].astype(np.float64)
    contrast = float(box.max() - box.min())
    if contrast < contrast_min:
        return RefineResult((cx, cy), contrast, False)
    iy, ix = np.unravel_index(int(np.argmin(box)), box.shape)
    dx, dy = _subpixel_extremum(-box, iy, ix)
    return RefineResult(
        (float(x0 + bx0 + ix + dx), float(y0 + by0 + iy + dy)), contrast, True
    )


def refine_intersection(
    img: np.ndarray,
    point: Tuple[float, float],
    angle_deg: float,
    method: str = "template",
    window: int = 25,
    arm: int = 41,
    stroke: float = 3.0,
    min_confidence: float = 0.2,
    cross_len: int = 20,
    contrast_min: int = 10,
) -> RefineResult:
    """Refine a coarse intersection inside a +-window search box.

    template: maximize normalized cross-correlation against a synthetic
    dark cross rotated by angle_deg; confidence is the peak NCC.
    closing: close with a rotated cross SE and take the argmin; confidence
    is the closing contrast, and below contrast_min the coarse point is
    returned unrefined.
    """
    img = as_gray(img)
    if window < 1:
        raise DataError("refinement window must be >= 1")
    cx, cy = float(point[0]), float(point[1])
    if method == "template":
        return _refine_template(
            img, cx, cy, angle_deg, window, arm, stroke, min_confidence
        )
    if method == "closing":
        return _refine_closing(img, cx, cy, angle_deg, window, cross_len, contrast_min)
    raise DataError(f"unknown refinement method {method!r}")


# ---------------------------------------------------------------------------
# inference of missing intersections

def _fit_line_tls(pts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Total-least-squares line: returns (centroid, unit direction)."""
    c = pts.mean(axis=0)
    d = pts - c
    cov = d.T @ d
    vals, vecs = np.linalg.eigh(cov)
    return c, vecs[:, int(np.argmax(vals))]


def infer_missing(
    points: np.ndarray, line_ids: np.ndarray, confident: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Fill low-confidence intersections from line fits.

    Each point belongs to one family-A line and one family-B line
    (line_ids columns). For every non-confident slot, a total-least-squares
    line is fitted through the confident points of each of its two lines
    and the slot is replaced by the fit intersection. Slots whose lines
    have fewer than two confident points stay unfilled.

    Returns (updated points, filled flags).
    """
    points = as_points(points)
    line_ids = np.asarray(line_ids, dtype=np.int64)
    confident = np.asarray(confident, dtype=bool)
    if len(points) != len(line_ids) or len(points) != len(confident):
        raise DataError("points, line_ids and confident must align")
    out = points.copy()
    filled = confident.copy()
    fits = {}
    for axis in (0, 1):
        for lid in np.unique(line_ids[:, axis]):
            sel = (line_ids[:, axis] == lid) & confident
            if sel.sum() >= 2:
                fits[(axis, int(lid))] = _fit_line_tls(points[sel])
    for k in np.nonzero(~confident)[0]:
        fa = fits.get((0, int(line_ids[k, 0])))
        fb = fits.get((1, int(line_ids[k, 1])))
        if fa is None or fb is None:
            log.info("intersection %d left unfilled (not enough support)", k)
            continue
        (ca, da), (cb, db) = fa, fb
        m = np.array([[da[0], -db[0]], [da[1], -db[1]]])
        if abs(np.linalg.det(m)) < 1e-9:
            log.info("intersection %d left unfilled (parallel fits)", k)
            continue
        t, _ = np.linalg.solve(m, cb - ca)
        out[k] = ca + t * da
        filled[k] = True
    return out, filled
