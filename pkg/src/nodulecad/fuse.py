"""Union-join of per-plane candidate streams in the axial world frame."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, List, Sequence

import numpy as np

from .detect.boxes import Candidate, Source, _UnionFind, sort_candidates


class MergeMode(enum.Enum):
    # merge iff 0.88 * d <= max radius: nearby duplicates collapse
    PROXIMITY = "proximity"
    # merge iff max radius < 0.88 * d, the inequality exactly as printed
    LITERAL_PAPER = "literal"


@dataclass(frozen=True)
class MergeRule:
    factor: float = 0.88
    mode: MergeMode = MergeMode.PROXIMITY

    def __post_init__(self):
        if not self.factor > 0:
            raise ValueError(f"merge factor must be > 0, got {self.factor}")


def _dist(a, b) -> float:
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.sqrt((d * d).sum()))


def merge_predicate(a: Candidate, b: Candidate, rule: MergeRule = MergeRule()) -> bool:
    d = _dist(a.center, b.center)
    r = max(a.radius_mm, b.radius_mm)
    if rule.mode is MergeMode.LITERAL_PAPER:
        return r < rule.factor * d
    return rule.factor * d <= r


def _edges(cands: Sequence[Candidate], rule: MergeRule):
    """Index pairs ``(i, j)``, ``i < j``, joined by the merge predicate."""
    centers = np.array([c.center for c in cands], dtype=np.float64)
    radii = np.array([c.radius_mm for c in cands], dtype=np.float64)
    for i in range(len(cands) - 1):
        diff = centers[i + 1 :] - centers[i]
        d = np.sqrt((diff * diff).sum(axis=1))
        r = np.maximum(radii[i + 1 :], radii[i])
        if rule.mode is MergeMode.LITERAL_PAPER:
            hits = r < rule.factor * d
        else:
            hits = rule.factor * d <= r
        for j in np.nonzero(hits)[0]:
            yield i, i + 1 + int(j)


def _collapse(members: Sequence[Candidate]) -> Candidate:
    if len(members) == 1:
        return members[0].with_source(Source.FUSED)
    members = sorted(members, key=lambda c: (c.center, c.radius_mm, c.score, c.source.value))
    w = np.array([c.score for c in members], dtype=np.float64)
    # scale by the max so tiny (subnormal) scores do not underflow the centroid
    w = w / w.max() if w.max() > 0 else np.ones_like(w)
    centers = np.array([c.center for c in members])
    center = (w[:, None] * centers).sum(axis=0) / w.sum()
    return Candidate(
        scan_id=members[0].scan_id,
        center=tuple(center),
        radius_mm=max(c.radius_mm for c in members),
        score=max(c.score for c in members),
        source=Source.FUSED,
    )


def _fuse_scan(cands: List[Candidate], rule: MergeRule) -> List[Candidate]:
    groups = [[n] for n in range(len(cands))]
    while True:
        fused = [_collapse([cands[n] for n in g]) for g in groups]
        uf = _UnionFind(len(groups))
        merged = False
        for i, j in _edges(fused, rule):
            uf.union(i, j)
            merged = True
        if not merged:
            return fused
        groups = [sorted(n for gi in comp for n in groups[gi]) for comp in uf.groups()]


def fuse_streams(streams: Iterable[Sequence[Candidate]], rule: MergeRule = MergeRule()) -> List[Candidate]:
    """Merge candidates from several streams.

    Every pair satisfying :func:`merge_predicate` is joined and each connected
    component collapses to one ``Fused`` candidate (score-weighted centre, max
    radius, max score). Collapsing can bring two groups within merge range of
    each other, so joining repeats on the collapsed set until no pair
    qualifies; fusing the output again is then a no-op. Candidates of
    different scans never merge.
    """
    by_scan: dict = {}
    for s in streams:
        for c in s:
            by_scan.setdefault(c.scan_id, []).append(c)
    out = []
    for scan_id in sorted(by_scan):
        out.extend(_fuse_scan(by_scan[scan_id], rule))
    return sort_candidates(out)
