"""Differentiable layer kernels built on the tensor graph.

Hot-path kernels (conv2d, layer norm, softmax) carry hand-written backward
closures; everything else composes the primitives in ``tensor``.  All
spatial code uses the project-wide pixel-center alignment: the center of
pixel i in a length-n axis sits at (i + 0.5) / n, so a coordinate in a
source grid of length m is u = (i + 0.5) * m / n - 0.5, clamped to the
valid range (edge-clamped interpolation).
"""

from __future__ import annotations

import zlib

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, _check_finite, _wrap, take

__all__ = [
    "relu",
    "gelu",
    "softmax",
    "layer_norm",
    "dropout",
    "conv2d",
    "attention",
    "bilinear_resize",
    "bilinear_sample_grid",
    "resize_array",
]

_GELU_C = float(np.sqrt(2.0 / np.pi))


def relu(x) -> Tensor:
    x = _wrap(x)
    _check_finite(x.data, "relu")
    out_data = np.maximum(x.data, 0)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * (x.data > 0))

    return Tensor._make(out_data, (x,), backward)


def gelu(x) -> Tensor:
    """tanh-approximation GELU."""
    x = _wrap(x)
    _check_finite(x.data, "gelu")
    d = x.data
    inner = _GELU_C * (d + 0.044715 * d * d * d)
    t = np.tanh(inner)
    out_data = 0.5 * d * (1.0 + t)

    def backward(g):
        if x.requires_grad:
            sech2 = 1.0 - t * t
            dinner = _GELU_C * (1.0 + 3 * 0.044715 * d * d)
            x._accumulate(g * (0.5 * (1.0 + t) + 0.5 * d * sech2 * dinner))

    return Tensor._make(out_data, (x,), backward)


def softmax(x, axis: int = -1) -> Tensor:
    """Numerically stable softmax; rows sum to one along ``axis``."""
    x = _wrap(x)
    _check_finite(x.data, "softmax")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if x.requires_grad:
            dot = (g * out_data).sum(axis=axis, keepdims=True)
            x._accumulate(out_data * (g - dot))

    return Tensor._make(out_data, (x,), backward)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalization over the last axis with affine parameters."""
    x = _wrap(x)
    gamma = _wrap(gamma, like=x)
    beta = _wrap(beta, like=x)
    _check_finite(x.data, "layer_norm")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = xhat * gamma.data + beta.data

    def backward(g):
        n = x.data.shape[-1]
        gy = g * gamma.data
        if x.requires_grad:
            m1 = gy.mean(axis=-1, keepdims=True)
            m2 = (gy * xhat).mean(axis=-1, keepdims=True)
            x._accumulate(inv * (gy - m1 - xhat * m2))
        if gamma.requires_grad:
            red = tuple(range(g.ndim - 1))
            gamma._accumulate((g * xhat).sum(axis=red))
        if beta.requires_grad:
            red = tuple(range(g.ndim - 1))
            beta._accumulate(g.sum(axis=red))

    return Tensor._make(out_data, (x, gamma, beta), backward)


def dropout_mask(shape, rate: float, seed: int, layer_id: int, step: int,
                 dtype=np.float32) -> np.ndarray:
    """Inverted-dropout keep mask from a counter-based RNG.

    The stream is keyed by (seed, layer_id) with the step as the counter, so
    a given (seed, layer, step) triple always produces the same mask, no
    matter how many other random draws happened in between.
    """
    mask64 = 0xFFFFFFFFFFFFFFFF
    key = np.array([seed & mask64, layer_id & mask64], dtype=np.uint64)
    counter = np.array([0, step & mask64, 0, 0], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key, counter=counter))
    keep = rng.random(shape) >= rate
    return keep.astype(dtype) / (1.0 - rate)


def dropout(x, rate: float, seed: int, layer_id: int, step: int,
            training: bool) -> Tensor:
    if not training or rate <= 0.0:
        return _wrap(x)
    x = _wrap(x)
    mask = dropout_mask(x.data.shape, rate, seed, layer_id, step, x.data.dtype)
    out_data = x.data * mask

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * mask)

    return Tensor._make(out_data, (x,), backward)


def layer_key(name: str) -> int:
    """Stable 32-bit id for a layer name (crc32; Python hash() is salted)."""
    return zlib.crc32(name.encode("utf-8"))


# -- convolution ----------------------------------------------------------------


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D convolution, NHWC layout, weight (kh, kw, cin, cout).

    Forward lowers to an im2col matmul; backward scatters through the same
    window pattern with per-tap strided slice adds (deterministic order).
    """
    x = _wrap(x)
    weight = _wrap(weight, like=x)
    _check_finite(x.data, "conv2d")
    if x.data.ndim != 4:
        raise ShapeError(f"conv2d expects NHWC rank-4 input, got {x.shape}")
    kh, kw, cin, cout = weight.data.shape
    n, h, w, cx = x.data.shape
    if cx != cin:
        raise ShapeError(f"conv2d channel mismatch: input {cx}, weight {cin}")
    xp = x.data
    if padding:
        xp = np.pad(xp, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    hp, wp = xp.shape[1], xp.shape[2]
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    if oh <= 0 or ow <= 0:
        raise ShapeError(
            f"conv2d output would be empty for input {x.shape}, kernel {kh}x{kw}"
        )
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    win = win[:, ::stride, ::stride]  # (n, oh, ow, cin, kh, kw)
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))
    cols2 = cols.reshape(n * oh * ow, kh * kw * cin)
    wmat = weight.data.reshape(kh * kw * cin, cout)
    out2 = cols2 @ wmat
    if bias is not None:
        bias = _wrap(bias, like=x)
        out2 = out2 + bias.data
    out_data = out2.reshape(n, oh, ow, cout)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = g.reshape(n * oh * ow, cout)
        if weight.requires_grad:
            weight._accumulate((cols2.T @ g2).reshape(kh, kw, cin, cout))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g2.sum(axis=0))
        if x.requires_grad:
            gcols = (g2 @ wmat.T).reshape(n, oh, ow, kh, kw, cin)
            gxp = np.zeros((n, hp, wp, cin), dtype=g.dtype)
            for ki in range(kh):
                for kj in range(kw):
                    gxp[:, ki:ki + stride * oh:stride,
                        kj:kj + stride * ow:stride, :] += gcols[:, :, :, ki, kj, :]
            if padding:
                gxp = gxp[:, padding:hp - padding, padding:wp - padding, :]
            x._accumulate(gxp)

    return Tensor._make(out_data, parents, backward)


# -- attention -------------------------------------------------------------------


def attention(q, k, v, heads: int) -> Tensor:
    """Scaled dot-product multi-head attention over sets.

    q: (B, Tq, D), k/v: (B, Tk, D); D must divide into ``heads``.  Composed
    from graph primitives, so the backward pass is derived automatically.
    """
    q = _wrap(q)
    d = q.data.shape[-1]
    if d % heads:
        raise ShapeError(f"attention dim {d} not divisible by {heads} heads")
    dh = d // heads
    b, tq = q.data.shape[0], q.data.shape[1]
    tk = _wrap(k).data.shape[1]

    def split(t, tlen):
        t = t.reshape(b, tlen, heads, dh)
        return t.transpose(0, 2, 1, 3)  # (B, h, T, dh)

    qh = split(q, tq)
    kh = split(_wrap(k), tk)
    vh = split(_wrap(v), tk)
    scores = (qh @ kh.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(dh))
    weights = softmax(scores, axis=-1)
    out = weights @ vh  # (B, h, Tq, dh)
    return out.transpose(0, 2, 1, 3).reshape(b, tq, d)


# -- bilinear interpolation -------------------------------------------------------


def _axis_weights(src: int, dst: int):
    """Source indices and lerp weights for a center-aligned 1-D resize."""
    u = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
    u = np.clip(u, 0.0, src - 1.0)
    i0 = np.floor(u).astype(np.int64)
    i1 = np.minimum(i0 + 1, src - 1)
    frac = u - i0
    return i0, i1, frac


def bilinear_resize(x, out_h: int, out_w: int) -> Tensor:
    """Differentiable center-aligned bilinear resize of (..., H, W, C)."""
    x = _wrap(x)
    h, w = x.data.shape[-3], x.data.shape[-2]
    dt = x.data.dtype
    r0, r1, fr = _axis_weights(h, out_h)
    c0, c1, fc = _axis_weights(w, out_w)
    hax = x.data.ndim - 3
    fr = fr.astype(dt).reshape((out_h, 1, 1))
    rows = take(x, r0, axis=hax) * (1.0 - fr) + take(x, r1, axis=hax) * fr
    fc = fc.astype(dt).reshape((out_w, 1))
    out = take(rows, c0, axis=hax + 1) * (1.0 - fc) + take(rows, c1, axis=hax + 1) * fc
    return out


def resize_array(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Non-differentiable bilinear resize for plain arrays (same alignment)."""
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[..., None]
    h, w = arr.shape[-3], arr.shape[-2]
    r0, r1, fr = _axis_weights(h, out_h)
    c0, c1, fc = _axis_weights(w, out_w)
    fr = fr.astype(arr.dtype).reshape((out_h, 1, 1))
    rows = np.take(arr, r0, axis=-3) * (1 - fr) + np.take(arr, r1, axis=-3) * fr
    fc = fc.astype(arr.dtype).reshape((out_w, 1))
    out = np.take(rows, c0, axis=-2) * (1 - fc) + np.take(rows, c1, axis=-2) * fc
    return out[..., 0] if squeeze else out


def bilinear_sample_grid(grid, points_rc: np.ndarray) -> Tensor:
    """Sample (q, H, W, C) grids at continuous (row, col) grid coordinates.

    Every grid in the stack is sampled at the same N points; sampling is
    edge-clamped and differentiable with respect to the grid values (the
    points are data, not parameters).  Returns (q, N, C).
    """
    grid = _wrap(grid)
    qn, h, w, c = grid.data.shape
    pts = np.asarray(points_rc, dtype=np.float64)
    r = np.clip(pts[:, 0], 0.0, h - 1.0)
    cc = np.clip(pts[:, 1], 0.0, w - 1.0)
    r0 = np.floor(r).astype(np.int64)
    c0 = np.floor(cc).astype(np.int64)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (r - r0).astype(grid.data.dtype)[:, None]
    fc = (cc - c0).astype(grid.data.dtype)[:, None]

    flat = grid.reshape(qn * h * w, c)
    offs = (np.arange(qn, dtype=np.int64) * h * w)[:, None]

    def gather(ri, ci):
        idx = (offs + (ri * w + ci)[None, :]).reshape(-1)
        return take(flat, idx, axis=0).reshape(qn, len(pts), c)

    top = gather(r0, c0) * (1.0 - fc) + gather(r0, c1) * fc
    bot = gather(r1, c0) * (1.0 - fc) + gather(r1, c1) * fc
    return top * (1.0 - fr) + bot * fr
