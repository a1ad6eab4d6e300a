"""Fused neural-network primitives with hand-written backward rules."""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, make_result, mul, unbroadcast


def _check_axis(x: Tensor, axis: int) -> int:
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"axis {axis} invalid for tensor of shape {x.shape}")
    return axis % x.ndim


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax (max-subtracted) along ``axis``."""
    axis = _check_axis(x, axis)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_result(out, (x,), "softmax", backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _check_axis(x, axis)
    m = x.data.max(axis=axis, keepdims=True)
    lse = m + np.log(np.exp(x.data - m).sum(axis=axis, keepdims=True))
    out = x.data - lse

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return make_result(out, (x,), "log_softmax", backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit (biased) variance, then scale and shift."""
    if eps <= 0:
        raise ValueError(f"layer_norm eps must be positive, got {eps}")
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(
            f"layer_norm: gamma {gamma.shape} / beta {beta.shape} must match last dim {d} of {x.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        gx = gg = gb = None
        if x.requires_grad:
            gxhat = g * gamma.data
            gx = inv * (
                gxhat
                - gxhat.mean(axis=-1, keepdims=True)
                - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
            )
        if gamma.requires_grad:
            gg = (g * xhat).reshape(-1, d).sum(axis=0)
        if beta.requires_grad:
            gb = g.reshape(-1, d).sum(axis=0)
        return gx, gg, gb

    return make_result(out, (x, gamma, beta), "layer_norm", backward)


def conv1d_causal(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Depthwise causal convolution over the second-to-last (time) axis.

    ``x`` is ``(..., L, D)``, ``kernel`` is ``(W, D)`` and ``bias`` is ``(D,)``.
    Output ``y[t, d] = bias[d] + sum_w kernel[w, d] * x[t - (W-1) + w, d]``
    with zero left padding, so ``y[t]`` never sees ``x[t+1:]``.
    """
    if kernel.ndim != 2 or kernel.shape[0] < 1:
        raise ValueError(f"conv1d_causal: kernel must be (W>=1, D), got {kernel.shape}")
    W, D = kernel.shape
    if x.ndim < 2 or x.shape[-1] != D or bias.shape != (D,):
        raise ShapeError(
            f"conv1d_causal: x {x.shape}, kernel {kernel.shape}, bias {bias.shape} disagree on channels"
        )
    L = x.shape[-2]
    pad = [(0, 0)] * (x.ndim - 2) + [(W - 1, 0), (0, 0)]
    xp = np.pad(x.data, pad)
    out = np.broadcast_to(bias.data, x.shape).copy()
    for w in range(W):
        out += kernel.data[w] * xp[..., w : w + L, :]

    def backward(g):
        gx = gk = gb = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for w in range(W):
                gxp[..., w : w + L, :] += kernel.data[w] * g
            gx = gxp[..., W - 1 :, :]
        if kernel.requires_grad:
            flat_g = g.reshape(-1, L, D)
            flat_x = xp.reshape(-1, L + W - 1, D)
            gk = np.stack([(flat_x[:, w : w + L, :] * flat_g).sum(axis=(0, 1)) for w in range(W)])
        if bias.requires_grad:
            gb = g.reshape(-1, D).sum(axis=0)
        return gx, gk, gb

    return make_result(out, (x, kernel, bias), "conv1d_causal", backward)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an explicit random generator")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, Tensor(keep))


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup ``table[ids]``; gradients scatter-add into indexed rows only."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(
            f"embedding index out of range [0, {table.shape[0]}): min {ids.min()}, max {ids.max()}"
        )

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (full,)

    return make_result(table.data[ids], (table,), "embedding", backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` stored as ``(out, in)``."""
    if x.shape[-1] != weight.shape[-1]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {weight.shape}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x2 @ weight.data.T
    if bias is not None:
        out = out + bias.data
    out = out.reshape(*lead, weight.shape[0])
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = g.reshape(-1, weight.shape[0])
        grads = [
            (g2 @ weight.data).reshape(x.shape) if x.requires_grad else None,
            g2.T @ x2 if weight.requires_grad else None,
        ]
        if bias is not None:
            grads.append(g2.sum(axis=0) if bias.requires_grad else None)
        return grads

    return make_result(out, inputs, "linear", backward)


def masked_mean(x: Tensor, mask: np.ndarray, axis: int) -> Tensor:
    """Mean of ``x`` over ``axis`` restricted to positions where ``mask`` is true.

    ``mask`` broadcasts against ``x`` after expanding trailing axes.
    """
    m = np.asarray(mask, dtype=np.float64)
    while m.ndim < x.ndim:
        m = m[..., None]
    counts = m.sum(axis=axis, keepdims=True)
    if np.any(counts == 0):
        raise ValueError("masked_mean: mask selects no positions for some row")
    weights = np.broadcast_to(m / counts, np.broadcast_shapes(m.shape, x.shape))
    out = (x.data * weights).sum(axis=axis)

    def backward(g):
        return (unbroadcast(np.expand_dims(g, axis) * weights, x.shape),)

    return make_result(out, (x,), "masked_mean", backward)


def const(x) -> Tensor:
    """Non-differentiable tensor wrapper (alias kept for readability at call sites)."""
    return as_tensor(x)
