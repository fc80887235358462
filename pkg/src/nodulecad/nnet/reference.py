"""Slow reference executor.

Every kernel here is an explicit scalar loop (compiled with numba so that
the full classifier runs in seconds). Nothing is shared with :mod:`.ops`:
padding is handled by bounds checks, pooling and dense layers accumulate
element by element. It exists to cross-check the vectorised executor.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .graph import Network
from .layers import (
    AvgPool,
    BatchNorm,
    Concat,
    Conv3d,
    Dense,
    Dropout,
    Flatten,
    LeakyReLU,
    ReLU,
    Sigmoid,
    triple,
)


@njit(cache=True)
def _conv3d(x, w, b, has_bias, sd, sh, sw, pd, ph, pw):
    c, d, h, wd = x.shape
    o, ci, kd, kh, kw = w.shape
    do = (d + 2 * pd - kd) // sd + 1
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    out = np.zeros((o, do, ho, wo))
    for oc in range(o):
        for ic in range(c):
            for a in range(kd):
                for bb in range(kh):
                    for e in range(kw):
                        wv = w[oc, ic, a, bb, e]
                        for z in range(do):
                            iz = z * sd + a - pd
                            if iz < 0 or iz >= d:
                                continue
                            for y in range(ho):
                                iy = y * sh + bb - ph
                                if iy < 0 or iy >= h:
                                    continue
                                for xx in range(wo):
                                    ix = xx * sw + e - pw
                                    if ix >= 0 and ix < wd:
                                        out[oc, z, y, xx] += wv * x[ic, iz, iy, ix]
        if has_bias:
            for z in range(do):
                for y in range(ho):
                    for xx in range(wo):
                        out[oc, z, y, xx] += b[oc]
    return out


@njit(cache=True)
def _batchnorm(x, mean, var, gamma, beta, eps):
    c = x.shape[0]
    n = x.size // c
    flat = x.reshape(c, n)
    out = np.empty((c, n))
    for ch in range(c):
        denom = math.sqrt(var[ch] + eps)
        for i in range(n):
            out[ch, i] = gamma[ch] * (flat[ch, i] - mean[ch]) / denom + beta[ch]
    return out


@njit(cache=True)
def _leaky(x, slope):
    flat = x.ravel()
    out = np.empty(flat.size)
    for i in range(flat.size):
        v = flat[i]
        out[i] = v if v >= 0.0 else slope * v
    return out


@njit(cache=True)
def _sigmoid(x):
    flat = x.ravel()
    out = np.empty(flat.size)
    for i in range(flat.size):
        v = flat[i]
        if v >= 0.0:
            out[i] = 1.0 / (1.0 + math.exp(-v))
        else:
            e = math.exp(v)
            out[i] = e / (1.0 + e)
    return out


@njit(cache=True)
def _avgpool(x, kd, kh, kw, sd, sh, sw):
    c, d, h, w = x.shape
    do = (d - kd) // sd + 1
    ho = (h - kh) // sh + 1
    wo = (w - kw) // sw + 1
    out = np.empty((c, do, ho, wo))
    inv = 1.0 / (kd * kh * kw)
    for ch in range(c):
        for z in range(do):
            for y in range(ho):
                for xx in range(wo):
                    acc = 0.0
                    for a in range(kd):
                        for b in range(kh):
                            for e in range(kw):
                                acc += x[ch, z * sd + a, y * sh + b, xx * sw + e]
                    out[ch, z, y, xx] = acc * inv
    return out


@njit(cache=True)
def _dense(x, w, b, has_bias):
    o, n = w.shape
    out = np.empty(o)
    for i in range(o):
        acc = 0.0
        for j in range(n):
            acc += w[i, j] * x[j]
        if has_bias:
            acc += b[i]
        out[i] = acc
    return out


@njit(cache=True)
def _concat2(a, b):
    ca = a.shape[0]
    n = a.size // ca
    cb = b.shape[0]
    fa = a.reshape(ca, n)
    fb = b.reshape(cb, n)
    out = np.empty((ca + cb, n))
    for ch in range(ca):
        for i in range(n):
            out[ch, i] = fa[ch, i]
    for ch in range(cb):
        for i in range(n):
            out[ca + ch, i] = fb[ch, i]
    return out


_EMPTY = np.zeros(1)


def _run(node, args, weights):
    layer = node.layer

    def p(name):
        return weights.get(f"{node.name}.{name}")

    x = args[0]
    if isinstance(layer, Conv3d):
        b = p("bias")
        (sd, sh, sw), (pd, ph, pw) = layer.s3, layer.p3
        if x.shape[0] != p("weight").shape[1]:
            raise ValueError("conv3d channel mismatch")
        return _conv3d(x, p("weight"), _EMPTY if b is None else b, b is not None, sd, sh, sw, pd, ph, pw)
    if isinstance(layer, BatchNorm):
        if np.any(p("var") < 0):
            raise ValueError("batchnorm variance must be >= 0")
        return _batchnorm(x, p("mean"), p("var"), p("gamma"), p("beta"), layer.eps).reshape(x.shape)
    if isinstance(layer, ReLU):
        return _leaky(x, 0.0).reshape(x.shape)
    if isinstance(layer, LeakyReLU):
        return _leaky(x, layer.slope).reshape(x.shape)
    if isinstance(layer, Sigmoid):
        return _sigmoid(x).reshape(x.shape)
    if isinstance(layer, Dropout):
        return x
    if isinstance(layer, AvgPool):
        return _avgpool(x, *triple(layer.size), *triple(layer.stride))
    if isinstance(layer, Flatten):
        return np.ascontiguousarray(x).reshape(-1).copy()
    if isinstance(layer, Dense):
        b = p("bias")
        return _dense(x, p("weight"), _EMPTY if b is None else b, b is not None)
    if isinstance(layer, Concat):
        out = args[0]
        for nxt in args[1:]:
            if nxt.shape[1:] != out.shape[1:]:
                raise ValueError("concat shape mismatch")
            out = _concat2(np.ascontiguousarray(out), np.ascontiguousarray(nxt)).reshape(
                (out.shape[0] + nxt.shape[0],) + out.shape[1:]
            )
        return out
    raise TypeError(f"unsupported layer {type(layer).__name__}")


def reference_forward(net: Network, x: np.ndarray, keep=()) -> np.ndarray:
    """Evaluate ``net`` node by node with the scalar-loop kernels."""
    weights = net.require_weights()
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != net.input_shape:
        raise ValueError(f"input shape {x.shape} != network input {net.input_shape}")
    keep = set(keep)
    last = net.last_use()
    out_name = net.output_name
    values = {net.input_name: x}
    kept = {}
    for k, node in enumerate(net.nodes):
        args = [np.ascontiguousarray(values[i]) for i in node.inputs]
        values[node.name] = _run(node, args, weights)
        if node.name in keep:
            kept[node.name] = values[node.name]
        for src in node.inputs:
            if last.get(src) == k and src != out_name:
                values.pop(src, None)
    result = values[out_name]
    if keep:
        kept["output"] = result
        return kept
    return result
