"""Independent brute-force and analytic oracles used by the tests.

Nothing here imports the implementation under test; each function recomputes
its answer from first principles with plain loops.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter, deque

import numpy as np


def half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


# --------------------------------------------------------------------------
# volume


def brute_mip(vol: np.ndarray, axis_comp: int, k: int, stride: int):
    """Per-window maxima of a ``(nz, ny, nx)`` array along index component
    ``axis_comp`` (0 = x, 1 = y, 2 = z) using explicit per-pixel loops.

    Returns a list of ``(start, stop, image)``.
    """
    arr_axis = 2 - axis_comp
    n = vol.shape[arr_axis]
    moved = np.moveaxis(vol, arr_axis, 0)
    h, w = moved.shape[1:]
    if k > n:
        windows = [(0, n)]
    else:
        windows = []
        s = 0
        while s < n:
            windows.append((s, min(s + k, n)))
            s += stride
    out = []
    for start, stop in windows:
        img = np.zeros((h, w), dtype=vol.dtype)
        for r in range(h):
            for c in range(w):
                best = moved[start, r, c]
                for z in range(start, stop):
                    if moved[z, r, c] > best:
                        best = moved[z, r, c]
                img[r, c] = best
        out.append((start, stop, img))
    return out


def affine_field(coef, origin, spacing, shape_zyx):
    """``f(x, y, z) = a x + b y + c z + d`` evaluated at voxel centres in world mm."""
    a, b, c, d = coef
    nz, ny, nx = shape_zyx
    x = origin[0] + np.arange(nx) * spacing[0]
    y = origin[1] + np.arange(ny) * spacing[1]
    z = origin[2] + np.arange(nz) * spacing[2]
    return a * x[None, None, :] + b * y[None, :, None] + c * z[:, None, None] + d


# --------------------------------------------------------------------------
# lungseg


def flood_fill_labels(mask: np.ndarray, connectivity: int) -> np.ndarray:
    """Label set pixels by breadth-first flood fill in raster order."""
    h, w = mask.shape
    if connectivity == 4:
        nbrs = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        nbrs = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]
    labels = np.zeros((h, w), dtype=int)
    nxt = 0
    for r in range(h):
        for c in range(w):
            if mask[r, c] and labels[r, c] == 0:
                nxt += 1
                labels[r, c] = nxt
                q = deque([(r, c)])
                while q:
                    pr, pc = q.popleft()
                    for dr, dc in nbrs:
                        rr, cc = pr + dr, pc + dc
                        if 0 <= rr < h and 0 <= cc < w and mask[rr, cc] and labels[rr, cc] == 0:
                            labels[rr, cc] = nxt
                            q.append((rr, cc))
    return labels


def same_partition(a: np.ndarray, b: np.ndarray) -> bool:
    """True when two label images induce the same partition of set pixels."""
    if not np.array_equal(a > 0, b > 0):
        return False
    fwd, back = {}, {}
    for x, y in zip(a[a > 0].tolist(), b[b > 0].tolist()):
        if fwd.setdefault(x, y) != y or back.setdefault(y, x) != x:
            return False
    return True


def brute_dilate(m: np.ndarray, fp: np.ndarray) -> np.ndarray:
    h, w = m.shape
    r = fp.shape[0] // 2
    out = np.zeros_like(m, dtype=np.uint8)
    for i in range(h):
        for j in range(w):
            for a in range(-r, r + 1):
                for b in range(-r, r + 1):
                    if fp[a + r, b + r] and 0 <= i - a < h and 0 <= j - b < w and m[i - a, j - b]:
                        out[i, j] = 1
    return out


# --------------------------------------------------------------------------
# nnet / fpr


def direct_conv3d(x, w, b=None, stride=1, pad=0):
    """Textbook 7-deep loop cross-correlation; stride and pad may be per axis."""
    c, d, h, wd = x.shape
    o, _, kd, kh, kw = w.shape
    sd, sh, sw = (stride,) * 3 if isinstance(stride, int) else stride
    pd, ph, pw = (pad,) * 3 if isinstance(pad, int) else pad
    xp = np.zeros((c, d + 2 * pd, h + 2 * ph, wd + 2 * pw))
    xp[:, pd : pd + d, ph : ph + h, pw : pw + wd] = x
    do = (d + 2 * pd - kd) // sd + 1
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    out = np.zeros((o, do, ho, wo))
    for oc in range(o):
        for z in range(do):
            for y in range(ho):
                for xx in range(wo):
                    acc = 0.0 if b is None else float(b[oc])
                    for ic in range(c):
                        for a in range(kd):
                            for bb in range(kh):
                                for e in range(kw):
                                    acc += xp[ic, z * sd + a, y * sh + bb, xx * sw + e] * w[oc, ic, a, bb, e]
                    out[oc, z, y, xx] = acc
    return out


def msdnet_param_count(
    initial=(32, 64, 128),
    growth=(8, 16, 32),
    ends=(16, 24, 32),
    depth=32,
    transitions=(16, 24),
    keep=0.25,
    compress=0.5,
    cls_ch=128,
    dense=(128, 32),
    size=32,
    in_ch=1,
) -> int:
    """Trainable parameters of the multi-scale dense classifier, tallied layer
    by layer from the architecture description.

    A conv block (bias-free conv + BN + ReLU) costs ``cin*cout*k^3`` weights
    plus ``2*cout`` BN scale/shift; running statistics are not trainable.
    """

    def block(cin, cout, k):
        return cin * cout * k**3 + 2 * cout

    def squeeze(c):
        return max(1, half_up(keep * c))

    total = 0
    ch = []
    prev = in_ch
    for f in initial:
        total += block(prev, f, 3)
        ch.append(f)
        prev = f
    n = len(initial)
    alive_prev = [True] * n
    for d in range(1, depth + 1):
        alive = [d <= ends[s] for s in range(n)]
        new = list(ch)
        for s in range(n):
            if not alive[s]:
                continue
            g = growth[s]
            coarse_link = s > 0 and (d == 1 or alive_prev[s - 1])
            if coarse_link:
                total += block(ch[s], squeeze(ch[s]), 1) + block(squeeze(ch[s]), g // 2, 3)
                total += block(ch[s - 1], squeeze(ch[s - 1]), 1) + block(squeeze(ch[s - 1]), g // 2, 3)
            else:
                total += block(ch[s], squeeze(ch[s]), 1) + block(squeeze(ch[s]), g, 3)
            new[s] = ch[s] + g
        ch = new
        if d in transitions:
            for s in range(n):
                if alive[s]:
                    out = int(ch[s] * compress)
                    total += block(ch[s], out, 1)
                    ch[s] = out
        alive_prev = alive
    total += block(ch[n - 1], cls_ch, 3) + block(cls_ch, cls_ch, 3)
    side = size // 2 ** (n - 1) // 2
    flat = cls_ch * side**3
    for units in dense:
        total += flat * units + units
        flat = units
    total += flat + 1
    return total


# --------------------------------------------------------------------------
# eval


def brute_sensitivities(cands, anns, n_scans, rates, scale=1.0):
    """Sensitivity at each rate by thresholding at every distinct score,
    re-matching the kept candidates, and reading the staircase.

    ``cands``: (scan_id, (x, y, z), score); ``anns``: (scan_id, (x, y, z), diameter).
    """
    thresholds = sorted({s for _, _, s in cands}, reverse=True)
    points = [(0.0, 0.0)]
    for t in thresholds:
        kept = [c for c in cands if c[2] >= t]
        detected = 0
        hit_any = [False] * len(kept)
        for sa, ca, da in anns:
            found = False
            for i, (sc, cc, _) in enumerate(kept):
                if sc == sa and math.dist(cc, ca) <= scale * da / 2:
                    found = True
                    hit_any[i] = True
            detected += found
        fp = sum(1 for h in hit_any if not h)
        points.append((fp / n_scans, detected / len(anns)))
    out = []
    for r in rates:
        out.append(max(s for f, s in points if f <= r))
    return out


def brute_cpm(fp_scores, tp_scores, n_scans, n_nodules, rates):
    """CPM by scanning every threshold, from pooled FP / crediting-TP scores."""
    thr = sorted(set(fp_scores) | set(tp_scores), reverse=True)
    pts = [(0, 0)] + [(sum(f >= t for f in fp_scores), sum(s >= t for s in tp_scores)) for t in thr]
    sens = [max(t for f, t in pts if f / n_scans <= r) / n_nodules for r in rates]
    return sum(sens) / len(sens)


def exhaustive_bootstrap(scans, rates):
    """CPM for every one of the ``k**k`` equally likely ordered resamples.

    ``scans`` is a list of ``(fp_scores, tp_scores, n_nodules)``.
    """
    k = len(scans)
    vals = []
    for pick in itertools.product(range(k), repeat=k):
        fp = [s for i in pick for s in scans[i][0]]
        tp = [s for i in pick for s in scans[i][1]]
        nn = sum(scans[i][2] for i in pick)
        if nn == 0:
            continue
        vals.append(brute_cpm(fp, tp, k, nn, rates))
    return sorted(vals)


def discrete_quantile(sorted_vals, q):
    """Inverse CDF of the uniform distribution over ``sorted_vals``."""
    n = len(sorted_vals)
    return sorted_vals[max(0, math.ceil(q * n) - 1)]


def majority_type(votes):
    """'GroundGlass', 'Solid' or 'PartSolid' from a strict-majority count."""
    if not votes:
        return "PartSolid"
    value, count = Counter(votes).most_common(1)[0]
    if count * 2 > len(votes):
        if value == 1:
            return "GroundGlass"
        if value == 5:
            return "Solid"
    return "PartSolid"


def central_difference(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * h)
    return g
