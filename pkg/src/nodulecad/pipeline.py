"""Pipeline stages as functions over in-memory objects and over files.

Every ``*_files`` function reads its inputs from disk and writes its
outputs to disk, so the full pipeline is exactly the composition of the
single-stage commands.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import formats
from .config import PipelineConfig
from .detect.boxes import PLANE_SOURCE, Candidate, Source, group_boxes, sort_candidates
from .fpr.classify import score_candidates
from .fpr.msdnet import build_msdnet
from .fpr.scorer import heuristic_score
from .fuse import fuse_streams
from .lungseg import apply_mask, segment_lung_slice
from .metrics import CpmReport, NoduleAnnotation, evaluate, scan_records
from .nnet import forward
from .volume import (
    CtVolume,
    GraySlice,
    GrayVolume,
    PlaneAxis,
    apply_window,
    mip_slab,
    plane_slices,
    round_half_up,
    resample_isotropic,
    stack_plane,
)

PLANES = {"axial": PlaneAxis.AXIAL, "coronal": PlaneAxis.CORONAL, "sagittal": PlaneAxis.SAGITTAL}
STREAMS = ("axial", "coronal", "sagittal", "mip")


def _map(fn: Callable, items: Sequence, threads: int) -> list:
    """Ordered map; results do not depend on ``threads``."""
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


# --------------------------------------------------------------------------
# in-memory stages


def preprocess(v: CtVolume, cfg: PipelineConfig = PipelineConfig()) -> GrayVolume:
    """Resample to isotropic spacing, then window to 8-bit gray."""
    if v.voxels.dtype == np.uint8:
        raise ValueError("preprocess expects an HU volume (dtype tag 0), got a gray volume")
    if v.is_isotropic() and abs(v.spacing[0] - cfg.target_spacing) < 1e-12:
        iso = v
    else:
        iso = resample_isotropic(v, cfg.target_spacing)
    return apply_window(iso, cfg.window())


def _mip_slices(g: GrayVolume, cfg: PipelineConfig, axial_mask: Optional[np.ndarray] = None) -> List[GraySlice]:
    src = g if axial_mask is None else g.with_voxels(np.where(axial_mask > 0, g.voxels, 0).astype(np.uint8))
    return mip_slab(src, cfg.mip())


def segment(g: GrayVolume, cfg: PipelineConfig = PipelineConfig(), threads: int = 1) -> Dict[str, np.ndarray]:
    """Per-plane lung masks as ``(nz, ny, nx)`` 0/1 arrays, plus the MIP-slab
    masks stacked along z when the MIP stream is segmented on its own."""
    seg = cfg.seg()
    masks = {}
    for name, axis in PLANES.items():
        sl = plane_slices(g, axis)
        masks[name] = stack_plane(_map(lambda s: segment_lung_slice(s, seg), sl, threads), axis)
    if cfg.mip_before_mask:
        slabs = _mip_slices(g, cfg)
        masks["mip"] = np.stack(_map(lambda s: segment_lung_slice(s, seg), slabs, threads), axis=0)
    return masks


def _slab_slices(g: GrayVolume, cfg: PipelineConfig) -> int:
    return max(1, int(round_half_up(cfg.mip_thickness / g.spacing[2])))


def detect_stream(
    g: GrayVolume,
    stream: str,
    cfg: PipelineConfig = PipelineConfig(),
    masks: Optional[Dict[str, np.ndarray]] = None,
    scan_id: str = "",
    threads: int = 1,
) -> List[Candidate]:
    """Candidates of one stream (``axial``, ``coronal``, ``sagittal`` or ``mip``)."""
    det = cfg.detector()
    use_masks = cfg.detect_on_masked and masks is not None
    if stream == "mip":
        if cfg.mip_before_mask:
            slabs = _mip_slices(g, cfg)
            if use_masks:
                slabs = [apply_mask(s, masks["mip"][n]) for n, s in enumerate(slabs)]
        else:
            slabs = _mip_slices(g, cfg, masks["axial"] if use_masks else None)
        boxes = [b for bs in _map(det.detect, slabs, threads) for b in bs]
        return group_boxes(boxes, g, cfg.group(_slab_slices(g, cfg)), scan_id, Source.AXIAL_MIP_10MM)
    if stream not in PLANES:
        raise ValueError(f"unknown stream {stream!r}")
    axis = PLANES[stream]
    src = g
    if use_masks:
        src = g.with_voxels(np.where(masks[stream] > 0, g.voxels, 0).astype(np.uint8))
    boxes = [b for bs in _map(det.detect, plane_slices(src, axis), threads) for b in bs]
    return group_boxes(boxes, g, cfg.group(), scan_id, PLANE_SOURCE[axis])


def detect(
    g: GrayVolume,
    streams: Sequence[str] = STREAMS,
    cfg: PipelineConfig = PipelineConfig(),
    masks: Optional[Dict[str, np.ndarray]] = None,
    scan_id: str = "",
    threads: int = 1,
) -> List[Candidate]:
    out = []
    for s in streams:
        out.extend(detect_stream(g, s, cfg, masks, scan_id, threads))
    return sort_candidates(out)


def fuse(cands: Sequence[Candidate], cfg: PipelineConfig = PipelineConfig()) -> List[Candidate]:
    by_source: Dict[Source, List[Candidate]] = {}
    for c in cands:
        by_source.setdefault(c.source, []).append(c)
    return fuse_streams([by_source[s] for s in sorted(by_source, key=lambda s: s.value)], cfg.merge())


def make_scorer(weights: Optional[Dict[str, np.ndarray]] = None, cfg: PipelineConfig = PipelineConfig()):
    """Heuristic scorer, or the classifier network when weights are given."""
    if weights is None:
        gain = cfg.scorer_gain
        return lambda cube: heuristic_score(cube, gain)
    net = build_msdnet().bind(weights)

    def score(cube):
        p = float(forward(net, cube.data.reshape(net.input_shape)).reshape(-1)[0])
        return float(np.clip(p, 1e-15, 1.0 - 1e-15))

    return score


def classify(
    g: GrayVolume,
    cands: Sequence[Candidate],
    cfg: PipelineConfig = PipelineConfig(),
    mask: Optional[np.ndarray] = None,
    weights: Optional[Dict[str, np.ndarray]] = None,
    threads: int = 1,
) -> List[Candidate]:
    params = cfg.cube()
    if params.use_mask and mask is None:
        raise ValueError("use_mask is set but no lung mask was given")
    return score_candidates(g, cands, make_scorer(weights, cfg), params, mask, threads)


def evaluate_candidates(
    cands: Sequence[Candidate],
    anns: Sequence[NoduleAnnotation],
    cfg: PipelineConfig = PipelineConfig(),
    scan_ids: Optional[Sequence[str]] = None,
) -> CpmReport:
    records = scan_records(cands, anns, scan_ids, cfg.hit_scale)
    return evaluate(records, cfg.bootstrap_n, cfg.bootstrap_seed)


# --------------------------------------------------------------------------
# file stages


MASK_FILES = {s: f"mask_{s}.mpv" for s in STREAMS}


def _gray(v: CtVolume, path) -> GrayVolume:
    if not isinstance(v, GrayVolume):
        raise ValueError(f"{path}: expected a gray volume (dtype tag 1)")
    return v


def _write_mask(path: Path, m: np.ndarray, like: CtVolume) -> None:
    formats.write_volume(path, GrayVolume((m > 0).astype(np.uint8) * 255, like.spacing, like.origin))


def _read_masks(mask_dir: Optional[Path], streams: Sequence[str]) -> Optional[Dict[str, np.ndarray]]:
    if mask_dir is None:
        return None
    out = {}
    for s in streams:
        p = Path(mask_dir) / MASK_FILES[s]
        if p.exists():
            out[s] = (formats.read_volume(p).voxels > 0).astype(np.uint8)
    return out


def preprocess_files(src: Path, dst: Path, cfg: PipelineConfig) -> None:
    formats.write_volume(dst, preprocess(formats.read_volume(src), cfg))


def segment_files(gray: Path, out_dir: Path, cfg: PipelineConfig, threads: int = 1) -> None:
    g = _gray(formats.read_volume(gray), gray)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, m in segment(g, cfg, threads).items():
        _write_mask(out_dir / MASK_FILES[name], m, g)


def _needed_masks(streams: Sequence[str], cfg: PipelineConfig) -> List[str]:
    need = set()
    for s in streams:
        if s == "mip":
            need.add("mip" if cfg.mip_before_mask else "axial")
        else:
            need.add(s)
    return sorted(need)


def detect_files(
    gray: Path, dst: Path, cfg: PipelineConfig, streams: Sequence[str], mask_dir: Optional[Path], scan_id: str, threads: int = 1
) -> None:
    g = _gray(formats.read_volume(gray), gray)
    masks = _read_masks(mask_dir, _needed_masks(streams, cfg))
    if masks is not None:
        missing = [s for s in _needed_masks(streams, cfg) if s not in masks]
        if missing and cfg.detect_on_masked:
            raise FileNotFoundError(f"mask file(s) missing in {mask_dir}: {[MASK_FILES[s] for s in missing]}")
    formats.write_text(dst, formats.candidates_to_csv(detect(g, streams, cfg, masks, scan_id, threads)))


def fuse_files(srcs: Sequence[Path], dst: Path, cfg: PipelineConfig) -> None:
    cands = []
    for p in srcs:
        cands.extend(formats.candidates_from_csv(formats.read_text(p), str(p)))
    formats.write_text(dst, formats.candidates_to_csv(fuse(cands, cfg)))


def classify_files(
    gray: Path, src: Path, dst: Path, cfg: PipelineConfig, mask: Optional[Path], weights: Optional[Path], threads: int = 1
) -> None:
    g = _gray(formats.read_volume(gray), gray)
    cands = formats.candidates_from_csv(formats.read_text(src), str(src))
    m = (formats.read_volume(mask).voxels > 0).astype(np.uint8) if mask is not None else None
    w = formats.read_weights(weights) if weights is not None else None
    formats.write_text(dst, formats.candidates_to_csv(classify(g, cands, cfg, m, w, threads)))


def evaluate_files(
    cands_path: Path, anns_path: Path, cfg: PipelineConfig, froc_out: Optional[Path] = None, scan_ids=None
) -> CpmReport:
    cands = formats.candidates_from_csv(formats.read_text(cands_path), str(cands_path))
    anns = formats.annotations_from_csv(formats.read_text(anns_path), str(anns_path))
    report = evaluate_candidates(cands, anns, cfg, scan_ids)
    if froc_out is not None:
        formats.write_text(froc_out, formats.froc_to_csv(report.curve))
    return report


@dataclass(frozen=True)
class PipelinePaths:
    out_dir: Path

    @property
    def gray(self) -> Path:
        return self.out_dir / "gray.mpv"

    @property
    def candidates(self) -> Path:
        return self.out_dir / "candidates.csv"

    @property
    def fused(self) -> Path:
        return self.out_dir / "fused.csv"

    @property
    def scored(self) -> Path:
        return self.out_dir / "scored.csv"

    @property
    def froc(self) -> Path:
        return self.out_dir / "froc.csv"

    @property
    def report(self) -> Path:
        return self.out_dir / "report.txt"


def run_pipeline_files(
    volume: Path,
    out_dir: Path,
    cfg: PipelineConfig,
    scan_id: str,
    annotations: Optional[Path] = None,
    weights: Optional[Path] = None,
    threads: int = 1,
) -> Optional[CpmReport]:
    """All stages, each reading the previous stage's files."""
    paths = PipelinePaths(Path(out_dir))
    paths.out_dir.mkdir(parents=True, exist_ok=True)
    preprocess_files(volume, paths.gray, cfg)
    segment_files(paths.gray, paths.out_dir, cfg, threads)
    detect_files(paths.gray, paths.candidates, cfg, STREAMS, paths.out_dir, scan_id, threads)
    fuse_files([paths.candidates], paths.fused, cfg)
    mask = paths.out_dir / MASK_FILES["axial"] if cfg.use_mask else None
    classify_files(paths.gray, paths.fused, paths.scored, cfg, mask, weights, threads)
    if annotations is None:
        return None
    report = evaluate_files(paths.scored, annotations, cfg, paths.froc, [scan_id])
    formats.write_text(paths.report, report.table() + "\n")
    return report
