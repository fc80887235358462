"""Hit matching, FROC, CPM, bootstrap intervals and size/type stratification."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .detect.boxes import Candidate

CPM_RATES = (0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0)


@dataclass(frozen=True)
class NoduleAnnotation:
    scan_id: str
    center: Tuple[float, float, float]
    diameter_mm: float
    texture_votes: Tuple[int, ...] = ()
    agreement: int = 0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "texture_votes", tuple(int(v) for v in self.texture_votes))
        if not self.diameter_mm > 0:
            raise ValueError(f"diameter must be > 0, got {self.diameter_mm}")
        if any(not 1 <= v <= 5 for v in self.texture_votes):
            raise ValueError(f"texture votes must be in 1..5, got {self.texture_votes}")
        if self.agreement < 0:
            raise ValueError("agreement must be >= 0")


class HitLabel(enum.Enum):
    TP = "TP"
    FP = "FP"
    DUPLICATE = "DuplicateIgnored"


@dataclass
class MatchResult:
    labels: List[HitLabel]
    detected: List[bool]
    # index of the crediting candidate per annotation, or None
    credited_by: List[Optional[int]]


def _score(c: Candidate) -> float:
    return c.fpr_score if c.fpr_score is not None else c.score


def match_hits(cands: Sequence[Candidate], anns: Sequence[NoduleAnnotation], scale: float = 1.0) -> MatchResult:
    """Label candidates against annotations.

    A candidate hits an annotation of the same scan when its centre lies
    within ``scale * diameter / 2``. Each annotation credits its highest
    scoring hit (ties to the lowest index) as TP; other hitting candidates
    are DuplicateIgnored, the rest FP. Scores are ``fpr_score`` when set,
    else ``score``.
    """
    labels = [HitLabel.FP] * len(cands)
    credited: List[Optional[int]] = [None] * len(anns)
    hits_any = [False] * len(cands)
    by_scan: Dict[str, List[int]] = {}
    for i, c in enumerate(cands):
        by_scan.setdefault(c.scan_id, []).append(i)
    for a_idx, a in enumerate(anns):
        idx = by_scan.get(a.scan_id, [])
        if not idx:
            continue
        centers = np.array([cands[i].center for i in idx])
        d = np.sqrt(((centers - np.asarray(a.center)) ** 2).sum(axis=1))
        inside = [i for i, di in zip(idx, d) if di <= scale * a.diameter_mm / 2.0]
        if not inside:
            continue
        for i in inside:
            hits_any[i] = True
        best = max(inside, key=lambda i: (_score(cands[i]), -i))
        credited[a_idx] = best
    tp = {i for i in credited if i is not None}
    for i in range(len(cands)):
        if i in tp:
            labels[i] = HitLabel.TP
        elif hits_any[i]:
            labels[i] = HitLabel.DUPLICATE
    return MatchResult(labels, [c is not None for c in credited], credited)


@dataclass(frozen=True)
class ScanRecord:
    """Per-scan scores that determine the FROC: FP candidate scores, the
    crediting score of each detected nodule, and the nodule count."""

    scan_id: str
    fp_scores: Tuple[float, ...]
    tp_scores: Tuple[float, ...]
    n_nodules: int


def scan_records(
    cands: Sequence[Candidate],
    anns: Sequence[NoduleAnnotation],
    scan_ids: Optional[Sequence[str]] = None,
    scale: float = 1.0,
) -> List[ScanRecord]:
    m = match_hits(cands, anns, scale)
    # scans listed in ``scan_ids`` count even without candidates or nodules
    scan_ids = sorted(set(scan_ids or ()) | {c.scan_id for c in cands} | {a.scan_id for a in anns})
    fp: Dict[str, List[float]] = {s: [] for s in scan_ids}
    tp: Dict[str, List[float]] = {s: [] for s in scan_ids}
    nn: Dict[str, int] = {s: 0 for s in scan_ids}
    for c, lab in zip(cands, m.labels):
        if lab is HitLabel.FP:
            fp[c.scan_id].append(_score(c))
    for a, ci in zip(anns, m.credited_by):
        nn[a.scan_id] += 1
        if ci is not None:
            tp[a.scan_id].append(_score(cands[ci]))
    return [ScanRecord(s, tuple(fp[s]), tuple(tp[s]), nn[s]) for s in scan_ids]


@dataclass(frozen=True)
class FrocCurve:
    fp_per_scan: Tuple[float, ...]
    sensitivity: Tuple[float, ...]

    def points(self):
        return list(zip(self.fp_per_scan, self.sensitivity))


def froc_curve(fp_scores, tp_scores, n_scans: int, n_nodules: int) -> FrocCurve:
    """Staircase over every distinct score threshold.

    At threshold ``t`` the operating point is ``(#fp >= t / n_scans,
    #tp >= t / n_nodules)``. The curve starts at ``(0, 0)``; points sharing
    an FP rate keep the highest sensitivity.
    """
    if n_scans < 1 or n_nodules < 1:
        raise ValueError("n_scans and n_nodules must be >= 1")
    fp = np.sort(np.asarray(fp_scores, dtype=np.float64))
    tp = np.sort(np.asarray(tp_scores, dtype=np.float64))
    thr = np.unique(np.concatenate([fp, tp]))[::-1]
    n_fp = len(fp) - np.searchsorted(fp, thr, side="left")
    n_tp = len(tp) - np.searchsorted(tp, thr, side="left")
    best: Dict[int, int] = {0: 0}
    for f, t in zip(n_fp.tolist(), n_tp.tolist()):
        best[f] = max(best.get(f, 0), t)
    keys = sorted(best)
    return FrocCurve(
        tuple(k / n_scans for k in keys),
        tuple(best[k] / n_nodules for k in keys),
    )


def froc_from_records(records: Sequence[ScanRecord]) -> FrocCurve:
    fp = [s for r in records for s in r.fp_scores]
    tp = [s for r in records for s in r.tp_scores]
    return froc_curve(fp, tp, len(records), max(1, sum(r.n_nodules for r in records)))


def sensitivity_at(curve: FrocCurve, rate: float) -> float:
    """Best sensitivity among points with ``fp_per_scan <= rate`` (0 if none)."""
    vals = [s for f, s in curve.points() if f <= rate]
    return max(vals) if vals else 0.0


def cpm(curve: FrocCurve, rates: Sequence[float] = CPM_RATES) -> float:
    return float(np.mean([sensitivity_at(curve, r) for r in rates]))


def cpm_from_sensitivities(sens: Sequence[float]) -> float:
    """Mean of already-read-off sensitivities at the canonical rates."""
    if len(sens) != len(CPM_RATES):
        raise ValueError(f"expected {len(CPM_RATES)} sensitivities, got {len(sens)}")
    return float(np.mean(sens))


def _fast_cpm(fp: np.ndarray, tp: np.ndarray, n_scans: int, n_nodules: int, rates=CPM_RATES) -> float:
    """CPM from sorted-descending score arrays without building the curve.

    With ``A = floor(rate * n_scans)`` FPs allowed, the best threshold sits
    just above the ``(A+1)``-th highest FP score, or includes everything when
    there are at most ``A`` FPs.
    """
    sens = []
    for r in rates:
        a = int(np.floor(r * n_scans))
        n_tp = len(tp) if len(fp) <= a else int(np.count_nonzero(tp > fp[a]))
        sens.append(n_tp / n_nodules)
    # same reduction as cpm() so both paths agree bitwise
    return float(np.mean(sens))


def bootstrap_cpms(records: Sequence[ScanRecord], n: int = 1000, seed: int = 0, fast: bool = True) -> np.ndarray:
    """CPM of ``n`` scan-level resamples; replicate ``r`` draws with seed ``seed ^ r``.

    Replicates without any nodule have no defined CPM and come back as NaN.
    """
    if not records:
        raise ValueError("bootstrap needs at least one scan")
    k = len(records)
    fps = [np.asarray(r.fp_scores, dtype=np.float64) for r in records]
    tps = [np.asarray(r.tp_scores, dtype=np.float64) for r in records]
    nns = np.array([r.n_nodules for r in records])
    out = np.empty(n)
    for rep in range(n):
        rng = np.random.default_rng(seed ^ rep)
        idx = rng.integers(0, k, size=k)
        n_nod = int(nns[idx].sum())
        if n_nod == 0:
            out[rep] = np.nan
            continue
        fp = np.concatenate([fps[i] for i in idx])
        tp = np.concatenate([tps[i] for i in idx])
        if fast:
            out[rep] = _fast_cpm(-np.sort(-fp), tp, k, n_nod)
        else:
            out[rep] = cpm(froc_curve(fp, tp, k, n_nod))
    return out


def bootstrap_ci(records: Sequence[ScanRecord], n: int = 1000, level: float = 0.95, seed: int = 0) -> Tuple[float, float]:
    vals = bootstrap_cpms(records, n, seed)
    tail = 50.0 * (1.0 - level)
    if np.all(np.isnan(vals)):
        return (float("nan"), float("nan"))
    lo, hi = np.nanpercentile(vals, [tail, 100.0 - tail])
    return float(lo), float(hi)


@dataclass(frozen=True)
class CpmReport:
    rates: Tuple[float, ...]
    sensitivities: Tuple[float, ...]
    cpm: float
    ci_low: float
    ci_high: float
    n_bootstrap: int
    seed: int
    curve: FrocCurve = field(repr=False, default=FrocCurve((0.0,), (0.0,)))

    def table(self) -> str:
        lines = ["fp_per_scan  sensitivity"]
        for r, s in zip(self.rates, self.sensitivities):
            lines.append(f"{r:11.3f}  {s:11.3f}")
        lines.append(f"CPM {self.cpm:.3f}")
        if self.n_bootstrap:
            lines.append(f"95% CI [{self.ci_low:.3f}, {self.ci_high:.3f}] ({self.n_bootstrap} resamples, seed {self.seed})")
        return "\n".join(lines)


def evaluate(records: Sequence[ScanRecord], n_bootstrap: int = 1000, seed: int = 0) -> CpmReport:
    curve = froc_from_records(records)
    sens = tuple(sensitivity_at(curve, r) for r in CPM_RATES)
    lo, hi = bootstrap_ci(records, n_bootstrap, seed=seed) if n_bootstrap else (float("nan"), float("nan"))
    return CpmReport(CPM_RATES, sens, float(np.mean(sens)), lo, hi, n_bootstrap, seed, curve)


# --------------------------------------------------------------------------
# Stratification


class NoduleType(enum.Enum):
    GROUND_GLASS = "GroundGlass"
    PART_SOLID = "PartSolid"
    SOLID = "Solid"


class SizeBin(enum.Enum):
    B3_6 = (3.0, 6.0)
    B6_8 = (6.0, 8.0)
    B8_15 = (8.0, 15.0)
    B15_UP = (15.0, float("inf"))

    @property
    def label(self) -> str:
        lo, hi = self.value
        return f">={lo:g}mm" if hi == float("inf") else f"{lo:g}-{hi:g}mm"


def nodule_type(votes: Sequence[int]) -> NoduleType:
    """Strict majority of 1 -> ground-glass, of 5 -> solid, otherwise part-solid."""
    n = len(votes)
    if n:
        if 2 * sum(1 for v in votes if v == 1) > n:
            return NoduleType.GROUND_GLASS
        if 2 * sum(1 for v in votes if v == 5) > n:
            return NoduleType.SOLID
    return NoduleType.PART_SOLID


def size_bin(diameter_mm: float) -> Optional[SizeBin]:
    """Half-open lower-inclusive bin, or None below 3 mm."""
    for b in SizeBin:
        lo, hi = b.value
        if lo <= diameter_mm < hi:
            return b
    return None


@dataclass
class Stratification:
    total: Dict[Tuple[SizeBin, NoduleType], int]
    detected: Dict[Tuple[SizeBin, NoduleType], int]
    excluded: int = 0

    def rate(self, key) -> float:
        n = self.total.get(key, 0)
        return self.detected.get(key, 0) / n if n else float("nan")

    def by_size(self, b: SizeBin) -> Tuple[int, int]:
        return (
            sum(v for (sb, _), v in self.total.items() if sb is b),
            sum(v for (sb, _), v in self.detected.items() if sb is b),
        )

    def by_type(self, t: NoduleType) -> Tuple[int, int]:
        return (
            sum(v for (_, nt), v in self.total.items() if nt is t),
            sum(v for (_, nt), v in self.detected.items() if nt is t),
        )

    def overall(self) -> Tuple[int, int]:
        return sum(self.total.values()), sum(self.detected.values())


def stratify(anns: Sequence[NoduleAnnotation], detected: Sequence[bool]) -> Stratification:
    if len(anns) != len(detected):
        raise ValueError("one detected flag per annotation required")
    total = {(b, t): 0 for b in SizeBin for t in NoduleType}
    hit = dict(total)
    excluded = 0
    for a, d in zip(anns, detected):
        b = size_bin(a.diameter_mm)
        if b is None:
            excluded += 1
            continue
        key = (b, nodule_type(a.texture_votes))
        total[key] += 1
        hit[key] += int(bool(d))
    if excluded:
        warnings.warn(f"{excluded} annotation(s) below 3 mm excluded from stratification", stacklevel=2)
    return Stratification(total, hit, excluded)
