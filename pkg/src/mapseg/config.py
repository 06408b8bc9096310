"""Pipeline constant bundles and TOML config loading.

Dataclass defaults are the full-scale constants quoted by the competitor
method descriptions (area thresholds in pixels at the original sheet
resolution, the h=2 dynamic, the 0.3 fill ratio, the 60% river overlap,
factor-10 subsampling, length-20 cross, contrast 10, and so on). A TOML
file can override any field; `desk_scale` derives a configuration for
small synthetic sheets by scaling length-like constants linearly and
area-like constants quadratically.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

from .errors import DataError
from .synth import BlockLayoutSpec, GraticuleSpec, NoiseSpec, RiverSpec, SheetSpec

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml


@dataclass(frozen=True)
class Task1Cmm2Config:
    area_close: int = 1000
    dynamics_h: int = 2
    gradient_size: int = 3
    min_area: int = 2000
    max_area: int = 1_000_000
    min_fill_ratio: float = 0.3
    river_overlap: float = 0.60
    river_subsample: int = 4
    river_open_len: int = 15  # disk radius at the river subsample
    river_close_len: int = 60
    river_min_area: int = 50_000  # full-scale pixels
    river_max_fill_ratio: float = 0.35
    river_max_threshold: int = 200


@dataclass(frozen=True)
class Task2CmmConfig:
    qfz_slope: int = 2
    margin_min_intensity: int = 180
    tophat_size: int = 11
    center_frac: float = 0.5  # rectangle of W/2 x H/2, centered
    legend_min_fill: float = 0.9
    legend_border_frac: float = 0.02
    legend_max_frac: float = 0.4


@dataclass(frozen=True)
class RecursiveOtsuConfig:
    max_depth: int = 3
    delta_stop: int = 5
    max_ink_fraction: float = 0.4
    min_ink_area: int = 12


@dataclass(frozen=True)
class Task3UwbConfig:
    otsu: RecursiveOtsuConfig = field(default_factory=RecursiveOtsuConfig)
    theta_step_deg: float = 0.25
    rho_step: float = 1.0
    min_lines: int = 4
    angle_tol_deg: float = 2.0
    spacing_tol: float = 4.0
    peak_floor: float = 0.3
    min_period: float = 80.0
    refine_window: int = 25
    template_arm: int = 41
    template_stroke: float = 3.0
    min_confidence: float = 0.2


@dataclass(frozen=True)
class Task3CmmConfig:
    subsample: int = 10
    pre_erosion: int = 10
    angle_min: float = 0.0
    angle_max: float = 30.0
    angle_step: float = 1.0
    direction_line_len: int = 25
    direction_tophat: int = 5
    frame_len_frac: float = 0.4  # min frame-line length, fraction of side
    frame_stroke: int = 4
    radon_floor: float = 0.3
    min_period: int = 10
    cross_len: int = 20
    contrast_min: int = 10
    refine_window: int = 20


@dataclass(frozen=True)
class PipelineConfig:
    task1: Task1Cmm2Config = field(default_factory=Task1Cmm2Config)
    task2: Task2CmmConfig = field(default_factory=Task2CmmConfig)
    task3_uwb: Task3UwbConfig = field(default_factory=Task3UwbConfig)
    task3_cmm: Task3CmmConfig = field(default_factory=Task3CmmConfig)


def full_scale() -> PipelineConfig:
    """Defaults matching the published full-resolution constants."""
    return PipelineConfig()


def desk_scale(factor: float = 0.125) -> PipelineConfig:
    """Configuration for synthetic desk-size sheets.

    Lengths scale by `factor`, areas by `factor` squared; intensity-like
    knobs (dynamics, slopes, contrasts, fractions) are untouched. The
    subsample factor is reduced so the working image keeps enough pixels.
    """
    if not 0 < factor <= 1:
        raise DataError("scale factor must be in (0, 1]")
    f = factor
    f2 = factor * factor

    def length(v, lo=1):
        return max(lo, int(round(v * f)))

    t1 = Task1Cmm2Config(
        area_close=max(4, int(round(1000 * f2))),
        min_area=max(16, int(round(2000 * f2))),
        max_area=max(4096, int(round(1_000_000 * f2 * 13))),
        river_subsample=4,
        river_open_len=length(15, lo=2),
        river_close_len=length(60, lo=6),
        river_min_area=max(64, int(round(50_000 * f2))),
    )
    t2 = Task2CmmConfig(tophat_size=max(5, length(11)))
    t3u = Task3UwbConfig(
        min_period=max(20.0, 80.0 * f * 4),
        refine_window=max(10, length(25)),
        template_arm=max(10, length(41, lo=10)),
        template_stroke=max(2.0, 3.0 * f * 4),
    )
    t3c = Task3CmmConfig(
        subsample=max(2, int(round(10 * f * 1.6))),
        pre_erosion=max(2, int(round(10 * f * 1.6))),
        direction_line_len=15,
        cross_len=20,
        refine_window=max(10, length(20, lo=10)),
    )
    return PipelineConfig(task1=t1, task2=t2, task3_uwb=t3u, task3_cmm=t3c)


# ---------------------------------------------------------------------------
# TOML loading

def _update_dataclass(obj, data: dict, where: str):
    if not isinstance(data, dict):
        raise DataError(f"config section {where!r} must be a table")
    names = {f.name: f for f in dataclasses.fields(obj)}
    kwargs = {}
    for key, val in data.items():
        if key not in names:
            raise DataError(f"unknown config key {where}.{key}")
        cur = getattr(obj, key)
        if dataclasses.is_dataclass(cur) and not isinstance(cur, type):
            kwargs[key] = _update_dataclass(cur, val, f"{where}.{key}")
        elif isinstance(val, list):
            kwargs[key] = tuple(tuple(v) if isinstance(v, list) else v for v in val)
        else:
            kwargs[key] = val
    return dataclasses.replace(obj, **kwargs)


def load_config(path, base: Optional[PipelineConfig] = None) -> PipelineConfig:
    """Read a TOML file overriding any PipelineConfig field.

    Sections: [task1], [task2], [task3_uwb], [task3_cmm] (and nested
    [task3_uwb.otsu]); keys are the dataclass field names.
    """
    with open(path, "rb") as fh:
        data = _toml.load(fh)
    cfg = base if base is not None else PipelineConfig()
    return _update_dataclass(cfg, data, "config")


def load_sheet_spec(path) -> SheetSpec:
    """Read a SheetSpec from TOML: top-level keys plus optional
    [blocks], [graticule], [river], [noise] tables."""
    with open(path, "rb") as fh:
        data = _toml.load(fh)
    spec = SheetSpec()
    sub = {
        "blocks": BlockLayoutSpec,
        "graticule": GraticuleSpec,
        "river": RiverSpec,
        "noise": NoiseSpec,
    }
    kwargs = {}
    for key, val in data.items():
        if key in sub:
            if val is False:  # "graticule = false" disables the layer
                kwargs[key] = None if key != "noise" else NoiseSpec()
            else:
                kwargs[key] = _update_dataclass(sub[key](), val, key)
        else:
            kwargs[key] = val
    names = {f.name for f in dataclasses.fields(SheetSpec)}
    bad = set(kwargs) - names
    if bad:
        raise DataError(f"unknown sheet spec keys: {sorted(bad)}")
    return dataclasses.replace(SheetSpec(), **kwargs)


def config_to_dict(cfg) -> dict:
    """Dataclass tree to plain dict (for manifests)."""
    return dataclasses.asdict(cfg)
