"""Pure-numpy kernels for the conv1d and batch-norm hot paths.

Conv layout trick: the padded batch is laid out as ``[C, B * Tp]`` with
``Tp = T + 2 * pad``. Tap ``k`` of the cross-correlation is then a single
GEMM against the column window ``[k, k + L)``, ``L = B * Tp - K + 1``;
columns that straddle two batch items are junk and dropped (forward) or
zero (backward).
"""
from __future__ import annotations

import numpy as np

NAME = "numpy"


def _flat_padded(x, pad):
    b, c, t = x.shape
    tp = t + 2 * pad
    xp = np.zeros((c, b, tp), dtype=x.dtype)
    xp[:, :, pad:pad + t] = x.transpose(1, 0, 2)
    return xp.reshape(c, b * tp)


def conv1d_forward(x, w, b, pad):
    """x (B, Cin, T), w (Cout, Cin, K), b (Cout,) or None -> (y, ctx)."""
    nb, cin, t = x.shape
    cout, _, k = w.shape
    tp = t + 2 * pad
    tout = tp - k + 1
    flat = _flat_padded(x, pad)
    width = nb * tp - k + 1
    # per-tap weight matrices must be contiguous for matmul to reach BLAS
    wk = np.ascontiguousarray(w.transpose(2, 0, 1))
    yfull = np.empty((cout, nb * tp), dtype=x.dtype)
    y = yfull[:, :width]
    if cin == 1:
        np.multiply(wk[0], flat[:, 0:width], out=y)
        for j in range(1, k):
            y += wk[j] * flat[:, j:j + width]
    else:
        np.matmul(wk[0], flat[:, 0:width], out=y)
        for j in range(1, k):
            y += wk[j] @ flat[:, j:j + width]
    out = yfull.reshape(cout, nb, tp)[:, :, :tout].transpose(1, 0, 2)
    if b is not None:
        out = out + b[None, :, None]
    else:
        out = np.ascontiguousarray(out)
    return out, (flat, w, nb, t, pad)


def conv1d_backward(ctx, gy, need_input_grad=True):
    flat, w, nb, t, pad = ctx
    cout, cin, k = w.shape
    tp = t + 2 * pad
    tout = tp - k + 1
    width = nb * tp - k + 1
    gfull = np.zeros((cout, nb, tp), dtype=gy.dtype)
    gfull[:, :, :tout] = gy.transpose(1, 0, 2)
    g = gfull.reshape(cout, nb * tp)[:, :width]
    gb = gy.sum(axis=(0, 2), dtype=np.float64).astype(gy.dtype)
    gwk = np.empty((k, cout, cin), dtype=w.dtype)
    for j in range(k):
        np.matmul(g, flat[:, j:j + width].T, out=gwk[j])
    gw = np.ascontiguousarray(gwk.transpose(1, 2, 0))
    gx = None
    if need_input_grad:
        wkt = np.ascontiguousarray(w.transpose(2, 1, 0))
        gflat = np.zeros((cin, nb * tp), dtype=gy.dtype)
        for j in range(k):
            gflat[:, j:j + width] += wkt[j] @ g
        gx = np.ascontiguousarray(gflat.reshape(cin, nb, tp)[:, :, pad:pad + t].transpose(1, 0, 2))
    return gx, gw, gb


def batchnorm_train_forward(x, gamma, beta, eps):
    """Per-channel statistics over (B, T), biased variance, float64 sums."""
    n = x.shape[0] * x.shape[2]
    mean = x.sum(axis=(0, 2), dtype=np.float64) / n
    xc = x - mean.astype(x.dtype)[None, :, None]
    var = np.einsum("bct,bct->c", xc, xc, dtype=np.float64) / n
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = xc * inv_std[None, :, None]
    y = xhat * gamma[None, :, None] + beta[None, :, None]
    return y, mean, var, (xhat, inv_std)


def batchnorm_train_backward(ctx, gamma, gy):
    xhat, inv_std = ctx
    n = gy.shape[0] * gy.shape[2]
    gbeta = gy.sum(axis=(0, 2), dtype=np.float64)
    ggamma = np.einsum("bct,bct->c", gy, xhat, dtype=np.float64)
    scale = (gamma * inv_std).astype(gy.dtype)
    # dx = gamma*inv_std/n * (n*gy - sum(gy) - xhat*sum(gy*xhat))
    gx = gy - (gbeta / n).astype(gy.dtype)[None, :, None]
    gx -= xhat * (ggamma / n).astype(gy.dtype)[None, :, None]
    gx *= scale[None, :, None]
    return gx, ggamma.astype(gy.dtype), gbeta.astype(gy.dtype)
