"""Differentiable operators: conv1d, batchnorm1d, relu, tanh, add, mul, sum, l1_loss."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateBatch, ShapeMismatch
from . import kernels
from .tensor import Tape, Tensor


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x), dtype=like.dtype if like is not None else None)


def _record(out: Tensor, inputs, backward) -> Tensor:
    tape = Tape.current()
    if tape is not None and any(tape.tracks(t) for t in inputs):
        tape.record(out, inputs, backward)
    return out


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None, padding: int = 0) -> Tensor:
    """Cross-correlation (no kernel flip) along the last axis."""
    if x.value.ndim != 3 or weight.value.ndim != 3:
        raise ShapeMismatch(f"conv1d expects 3-D input and weight, got {x.shape}, {weight.shape}")
    nb, cin, t = x.shape
    cout, wcin, k = weight.shape
    if wcin != cin:
        raise ShapeMismatch(f"input has {cin} channels, weight expects {wcin}")
    if k % 2 != 1:
        raise ShapeMismatch(f"kernel size must be odd, got {k}")
    if t + 2 * padding - k + 1 < 1:
        raise ShapeMismatch(f"length {t} too short for kernel {k} with padding {padding}")
    if bias is not None and bias.shape != (cout,):
        raise ShapeMismatch(f"bias shape {bias.shape} != ({cout},)")
    xv = np.ascontiguousarray(x.value)
    wv = np.ascontiguousarray(weight.value, dtype=xv.dtype)
    bv = None if bias is None else bias.value.astype(xv.dtype, copy=False)
    y, ctx = kernels.conv1d_forward(xv, wv, bv, padding)
    out = Tensor(y, dtype=xv.dtype)
    tape = Tape.current()
    need_x = tape is not None and tape.tracks(x)

    def backward(g):
        gx, gw, gb = kernels.conv1d_backward(ctx, np.ascontiguousarray(g), need_x)
        return gx, gw, gb

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _record(out, inputs, backward)


@dataclass
class BatchNormState:
    """Running statistics for one batch-norm layer (not learnable)."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5
    num_batches: int = 0

    @classmethod
    def fresh(cls, channels: int, momentum: float = 0.1, eps: float = 1e-5, dtype=np.float32):
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype), momentum, eps)


def batchnorm1d(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState,
                training: bool = True) -> Tensor:
    """Per-channel normalization over (batch, time).

    Training mode uses the biased batch variance for normalization and
    feeds the unbiased one into the running estimate.
    """
    if x.value.ndim != 3:
        raise ShapeMismatch(f"batchnorm1d expects (B, C, T), got {x.shape}")
    nb, c, t = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeMismatch(f"gamma/beta must have shape ({c},)")
    xv = x.value
    gv = gamma.value.astype(xv.dtype, copy=False)
    bv = beta.value.astype(xv.dtype, copy=False)
    if training:
        n = nb * t
        if n <= 1:
            raise DegenerateBatch("batch norm needs more than one value per channel in training")
        y, mean, var, ctx = kernels.batchnorm_train_forward(np.ascontiguousarray(xv), gv, bv, state.eps)
        m = state.momentum
        dt = state.running_mean.dtype
        state.running_mean[:] = ((1 - m) * state.running_mean + m * mean).astype(dt)
        state.running_var[:] = ((1 - m) * state.running_var + m * var * n / (n - 1)).astype(dt)
        state.num_batches += 1

        def backward(g):
            return kernels.batchnorm_train_backward(ctx, gv, np.ascontiguousarray(g))
    else:
        inv_std = (1.0 / np.sqrt(state.running_var.astype(np.float64) + state.eps)).astype(xv.dtype)
        mean = state.running_mean.astype(xv.dtype)
        xhat = (xv - mean[None, :, None]) * inv_std[None, :, None]
        y = xhat * gv[None, :, None] + bv[None, :, None]

        def backward(g):
            gx = g * (gv * inv_std)[None, :, None]
            ggamma = np.einsum("bct,bct->c", g, xhat, dtype=np.float64).astype(g.dtype)
            gbeta = g.sum(axis=(0, 2), dtype=np.float64).astype(g.dtype)
            return gx, ggamma, gbeta

    return _record(Tensor(y, dtype=xv.dtype), (x, gamma, beta), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.value > 0
    out = Tensor(np.maximum(x.value, 0), dtype=x.dtype)
    return _record(out, (x,), lambda g: (g * mask,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.value)
    return _record(Tensor(y, dtype=x.dtype), (x,), lambda g: (g * (1 - y * y),))


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a)
    try:
        y = a.value + b.value
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from exc
    out = Tensor(y, dtype=y.dtype)
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a)
    try:
        y = a.value * b.value
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from exc
    av, bv = a.value, b.value
    out = Tensor(y, dtype=y.dtype)
    return _record(out, (a, b), lambda g: (_unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)))


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    out = Tensor(np.asarray(x.value.sum(dtype=np.float64), dtype=x.dtype), dtype=x.dtype)
    return _record(out, (x,), lambda g: (np.broadcast_to(g, x.shape).astype(x.dtype),))


def l1_loss(pred: Tensor, target) -> Tensor:
    """Mean absolute error over every element; subgradient 0 at a tie."""
    target = _as_tensor(target, pred)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs target {target.shape}")
    diff = pred.value - target.value.astype(pred.dtype, copy=False)
    n = diff.size
    out = Tensor(np.asarray(np.abs(diff).sum(dtype=np.float64) / n, dtype=pred.dtype), dtype=pred.dtype)

    def backward(g):
        s = np.sign(diff) * (g / n)
        return s.astype(pred.dtype, copy=False), -s.astype(pred.dtype, copy=False)

    return _record(out, (pred, target), backward)
