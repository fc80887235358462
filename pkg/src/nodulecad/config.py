"""Plain-text ``key = value`` pipeline configuration."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Dict

from .detect.boxes import GroupParams, ReferenceBlobDetector
from .fpr.classify import CubeParams
from .fuse import MergeMode, MergeRule
from .lungseg import SegParams, StructuringElement
from .volume import MipSpec, WindowSpec


class ConfigError(ValueError):
    def __init__(self, key: str, msg: str):
        super().__init__(f"config key {key!r}: {msg}")
        self.key = key


@dataclass(frozen=True)
class PipelineConfig:
    window_lo: float = -1000.0
    window_hi: float = 400.0
    target_spacing: float = 1.0
    mip_thickness: float = 10.0
    mip_stride: float = 1.0
    mip_before_mask: bool = True
    close_radius: int = 3
    dilate_radius: int = 2
    fill_holes: bool = True
    seg_connectivity: int = 8
    detect_on_masked: bool = True
    detect_thresh: float = 100.0
    min_area: int = 3
    max_area: int = 700
    min_fill: float = 0.5
    link_dist: float = 5.0
    max_extent: float = 32.0
    merge_mode: str = "proximity"
    merge_factor: float = 0.88
    cube_margin: int = 4
    use_mask: bool = False
    scorer_gain: float = 4.0
    hit_scale: float = 1.0
    bootstrap_n: int = 1000
    bootstrap_seed: int = 0

    # typed views, each validated by the owning module's constructor

    def window(self) -> WindowSpec:
        return WindowSpec(self.window_lo, self.window_hi)

    def mip(self) -> MipSpec:
        return MipSpec(thickness_mm=self.mip_thickness, stride_mm=self.mip_stride)

    def seg(self) -> SegParams:
        dil = StructuringElement.disk(self.dilate_radius) if self.dilate_radius > 0 else None
        return SegParams(StructuringElement.disk(self.close_radius), dil, self.seg_connectivity, self.fill_holes)

    def detector(self) -> ReferenceBlobDetector:
        return ReferenceBlobDetector(self.detect_thresh, self.min_area, self.max_area, 8, self.min_fill)

    def group(self, slab_slices: int = 1) -> GroupParams:
        return GroupParams(self.link_dist, slab_slices, self.max_extent if self.max_extent > 0 else None)

    def merge(self) -> MergeRule:
        modes = {"proximity": MergeMode.PROXIMITY, "literal": MergeMode.LITERAL_PAPER}
        if self.merge_mode not in modes:
            raise ConfigError("merge_mode", f"expected one of {sorted(modes)}, got {self.merge_mode!r}")
        return MergeRule(self.merge_factor, modes[self.merge_mode])

    def cube(self) -> CubeParams:
        if self.cube_margin < 0:
            raise ConfigError("cube_margin", "must be >= 0")
        return CubeParams(self.cube_margin, self.use_mask)

    def validate(self) -> "PipelineConfig":
        checks = {
            "window_lo": self.window,
            "mip_thickness": self.mip,
            "close_radius": self.seg,
            "detect_thresh": self.detector,
            "link_dist": self.group,
            "merge_factor": self.merge,
            "cube_margin": self.cube,
        }
        for key, build in checks.items():
            try:
                build()
            except ConfigError:
                raise
            except ValueError as e:
                raise ConfigError(key, str(e)) from None
        if not self.target_spacing > 0:
            raise ConfigError("target_spacing", "must be > 0")
        if not 0 <= self.detect_thresh <= 255:
            raise ConfigError("detect_thresh", "must be in [0, 255]")
        if not self.hit_scale > 0:
            raise ConfigError("hit_scale", "must be > 0")
        if self.bootstrap_n < 0:
            raise ConfigError("bootstrap_n", "must be >= 0")
        if self.seg_connectivity not in (4, 8):
            raise ConfigError("seg_connectivity", "must be 4 or 8")
        return self


_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as e:
        raise ConfigError(key, str(e)) from None


def parse_config(text: str, base: PipelineConfig = PipelineConfig()) -> PipelineConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    values: Dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line, f"line {lineno} is not 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(key, "unknown key")
        values[key] = _coerce(key, raw)
    return replace(base, **values).validate()


def format_config(cfg: PipelineConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"
