"""Vectorised inference primitives on ``(C, D, H, W)`` float arrays."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .layers import triple


def conv3d(x: np.ndarray, w: np.ndarray, b: Optional[np.ndarray] = None, stride=1, pad=0) -> np.ndarray:
    """3-D cross-correlation with zero padding.

    ``x`` is ``(C, D, H, W)``, ``w`` is ``(O, C, kd, kh, kw)``; each output
    extent is ``(n + 2p - k) // s + 1``.
    """
    if x.ndim != 4 or w.ndim != 5:
        raise ValueError(f"conv3d expects x (C,D,H,W) and w (O,C,kd,kh,kw), got {x.shape} and {w.shape}")
    c = x.shape[0]
    o, ci, kd, kh, kw = w.shape
    if ci != c:
        raise ValueError(f"conv3d channel mismatch: input has {c}, weights expect {ci}")
    if b is not None and b.shape != (o,):
        raise ValueError(f"conv3d bias shape {b.shape} != ({o},)")
    sd, sh, sw = triple(stride)
    pd, ph, pw = triple(pad)
    _, d, h, wd = x.shape
    do = (d + 2 * pd - kd) // sd + 1
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    if min(do, ho, wo) < 1:
        raise ValueError("conv3d output extent < 1")
    xp = np.pad(x, ((0, 0), (pd, pd), (ph, ph), (pw, pw))) if (pd or ph or pw) else x
    if (sd, sh, sw) == (1, 1, 1):
        # contract channels once over the whole padded volume, then add
        # shifted windows of the per-offset responses
        pdims = xp.shape[1:]
        taps = np.moveaxis(w.reshape(o, c, -1), 2, 0).reshape(-1, c)
        resp = (taps @ xp.reshape(c, -1)).reshape((kd * kh * kw, o) + pdims)
        out = np.zeros((o, do, ho, wo), dtype=np.float64)
        t = 0
        for a in range(kd):
            for bb in range(kh):
                for cc in range(kw):
                    out += resp[t, :, a : a + do, bb : bb + ho, cc : cc + wo]
                    t += 1
    else:
        out = np.zeros((o, do * ho * wo), dtype=np.float64)
        for a in range(kd):
            for bb in range(kh):
                for cc in range(kw):
                    patch = xp[
                        :,
                        a : a + sd * (do - 1) + 1 : sd,
                        bb : bb + sh * (ho - 1) + 1 : sh,
                        cc : cc + sw * (wo - 1) + 1 : sw,
                    ].reshape(c, -1)
                    out += w[:, :, a, bb, cc] @ patch
        out = out.reshape(o, do, ho, wo)
    if b is not None:
        out += b[:, None, None, None]
    return out


def batchnorm_inference(x, mean, var, scale, shift, eps: float = 1e-3) -> np.ndarray:
    """``scale * (x - mean) / sqrt(var + eps) + shift`` per channel (axis 0)."""
    var = np.asarray(var, dtype=np.float64)
    if np.any(var < 0):
        raise ValueError("batchnorm variance must be >= 0")
    c = x.shape[0]
    shape = (c,) + (1,) * (x.ndim - 1)
    mult = np.asarray(scale, dtype=np.float64) / np.sqrt(var + eps)
    return (x - np.reshape(mean, shape)) * mult.reshape(shape) + np.reshape(shift, shape)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def leaky_relu(x: np.ndarray, slope: float = 0.1) -> np.ndarray:
    return np.where(x >= 0, x, slope * x)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def avgpool3d(x: np.ndarray, size=2, stride=2) -> np.ndarray:
    kd, kh, kw = triple(size)
    sd, sh, sw = triple(stride)
    c, d, h, w = x.shape
    do, ho, wo = (d - kd) // sd + 1, (h - kh) // sh + 1, (w - kw) // sw + 1
    if min(do, ho, wo) < 1:
        raise ValueError("pool window larger than input")
    acc = np.zeros((c, do, ho, wo), dtype=np.float64)
    for a in range(kd):
        for b in range(kh):
            for e in range(kw):
                acc += x[
                    :,
                    a : a + sd * (do - 1) + 1 : sd,
                    b : b + sh * (ho - 1) + 1 : sh,
                    e : e + sw * (wo - 1) + 1 : sw,
                ]
    return acc / (kd * kh * kw)


def dense(x: np.ndarray, w: np.ndarray, b: Optional[np.ndarray] = None) -> np.ndarray:
    if x.ndim != 1 or w.ndim != 2 or w.shape[1] != x.shape[0]:
        raise ValueError(f"dense shape mismatch: x {x.shape}, w {w.shape}")
    y = w @ x
    return y + b if b is not None else y


def concat(xs: Sequence[np.ndarray]) -> np.ndarray:
    if not xs:
        raise ValueError("concat needs at least one tensor")
    first = xs[0].shape
    for t in xs[1:]:
        if t.ndim != len(first) or t.shape[1:] != first[1:]:
            raise ValueError(f"concat shape mismatch: {first} vs {t.shape}")
    return np.concatenate(xs, axis=0)
