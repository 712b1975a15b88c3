# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled float32 kernels for conv1d and batch norm.

Same flat padded layout as the numpy kernels, but every tap's GEMM
accumulates in place (sgemm with beta=1 into a strided column window), and
padding/transposition/bias/normalization run as single fused loops.
BLAS calls go through scipy's Cython bindings; all reductions over the
batch accumulate in double.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt
from scipy.linalg.cython_blas cimport sgemm

cnp.import_array()

NAME = "cython"


cdef inline void _gemm_rm(bint ta, bint tb, int m, int n, int k, float alpha,
                          float *a, int lda, float *b, int ldb, float beta,
                          float *c, int ldc) noexcept nogil:
    # row-major C[m,n] = op(A)[m,k] @ op(B)[k,n], via column-major C^T = op(B)^T op(A)^T
    cdef char transa = b'T' if tb else b'N'
    cdef char transb = b'T' if ta else b'N'
    sgemm(&transa, &transb, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)


cdef float[:, ::1] _flat_padded(const float[:, :, ::1] x, int pad):
    cdef Py_ssize_t nb = x.shape[0], cin = x.shape[1], t = x.shape[2]
    cdef Py_ssize_t tp = t + 2 * pad
    cdef float[:, ::1] flat = np.zeros((cin, nb * tp), dtype=np.float32)
    cdef Py_ssize_t b, c, i
    with nogil:
        for c in range(cin):
            for b in range(nb):
                for i in range(t):
                    flat[c, b * tp + pad + i] = x[b, c, i]
    return flat


def conv1d_forward(x, w, b, int pad):
    cdef const float[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float32)
    cdef Py_ssize_t nb = xv.shape[0], cin = xv.shape[1], t = xv.shape[2]
    cdef Py_ssize_t cout = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t tp = t + 2 * pad, tout = tp - k + 1
    cdef int width = <int>(nb * tp - k + 1)
    cdef int ld = <int>(nb * tp)
    cdef float[:, ::1] flat = _flat_padded(xv, pad)
    cdef float[:, :, ::1] wk = np.ascontiguousarray(np.transpose(w, (2, 0, 1)), dtype=np.float32)
    cdef float[:, ::1] yfull = np.empty((cout, nb * tp), dtype=np.float32)
    cdef float[:, ::1] cols
    cdef float[:, ::1] w2
    cdef Py_ssize_t j, r, co, bb, i
    if cin == 1:
        # im2col is only K rows here; one GEMM beats K rank-1 updates
        cols = np.empty((k, width), dtype=np.float32)
        w2 = np.ascontiguousarray(np.asarray(w)[:, 0, :], dtype=np.float32)
        with nogil:
            for j in range(k):
                for r in range(width):
                    cols[j, r] = flat[0, r + j]
            _gemm_rm(False, False, <int>cout, width, <int>k, 1.0, &w2[0, 0], <int>k,
                     &cols[0, 0], width, 0.0, &yfull[0, 0], ld)
    else:
        with nogil:
            for j in range(k):
                _gemm_rm(False, False, <int>cout, width, <int>cin, 1.0, &wk[j, 0, 0], <int>cin,
                         &flat[0, j], ld, 0.0 if j == 0 else 1.0, &yfull[0, 0], ld)
    cdef float[:, :, ::1] out = np.empty((nb, cout, tout), dtype=np.float32)
    cdef float[::1] bias
    cdef float bv
    cdef bint has_bias = b is not None
    if has_bias:
        bias = np.ascontiguousarray(b, dtype=np.float32)
    with nogil:
        for bb in range(nb):
            for co in range(cout):
                bv = bias[co] if has_bias else 0.0
                for i in range(tout):
                    out[bb, co, i] = yfull[co, bb * tp + i] + bv
    return np.asarray(out), (flat, np.ascontiguousarray(w, dtype=np.float32), nb, t, pad)


def conv1d_backward(ctx, gy, need_input_grad=True):
    flat_obj, w, nb_obj, t_obj, pad_obj = ctx
    cdef float[:, ::1] flat = flat_obj
    cdef Py_ssize_t nb = nb_obj, t = t_obj
    cdef int pad = pad_obj
    cdef Py_ssize_t cout = w.shape[0], cin = w.shape[1], k = w.shape[2]
    cdef Py_ssize_t tp = t + 2 * pad, tout = tp - k + 1
    cdef int width = <int>(nb * tp - k + 1)
    cdef int ld = <int>(nb * tp)
    cdef const float[:, :, ::1] g3 = np.ascontiguousarray(gy, dtype=np.float32)
    cdef float[:, ::1] g = np.zeros((cout, nb * tp), dtype=np.float32)
    cdef double[::1] gb = np.zeros(cout, dtype=np.float64)
    cdef Py_ssize_t bb, co, ci, i, j
    cdef double acc
    cdef float v
    with nogil:
        for co in range(cout):
            acc = 0.0
            for bb in range(nb):
                for i in range(tout):
                    v = g3[bb, co, i]
                    g[co, bb * tp + i] = v
                    acc = acc + v
            gb[co] = acc
    cdef float[:, :, ::1] gwk = np.empty((k, cout, cin), dtype=np.float32)
    with nogil:
        for j in range(k):
            # gw_j = g[:, :width] @ flat[:, j:j+width]^T
            _gemm_rm(False, True, <int>cout, <int>cin, width, 1.0, &g[0, 0], ld,
                     &flat[0, j], ld, 0.0, &gwk[j, 0, 0], <int>cin)
    gw = np.ascontiguousarray(np.transpose(np.asarray(gwk), (1, 2, 0)))
    gx = None
    cdef float[:, :, ::1] wk
    cdef float[:, ::1] gflat
    cdef float[:, :, ::1] gxv
    if need_input_grad:
        wk = np.ascontiguousarray(np.transpose(w, (2, 0, 1)))
        gflat = np.zeros((cin, nb * tp), dtype=np.float32)
        with nogil:
            for j in range(k):
                # gflat[:, j:j+width] += w_j^T @ g[:, :width]
                _gemm_rm(True, False, <int>cin, width, <int>cout, 1.0, &wk[j, 0, 0], <int>cin,
                         &g[0, 0], ld, 1.0, &gflat[0, j], ld)
        gxv = np.empty((nb, cin, t), dtype=np.float32)
        with nogil:
            for bb in range(nb):
                for ci in range(cin):
                    for i in range(t):
                        gxv[bb, ci, i] = gflat[ci, bb * tp + pad + i]
        gx = np.asarray(gxv)
    return gx, gw, np.asarray(gb).astype(np.float32)


def batchnorm_train_forward(x, gamma, beta, double eps):
    cdef const float[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float32)
    cdef const float[::1] gv = np.ascontiguousarray(gamma, dtype=np.float32)
    cdef const float[::1] bv = np.ascontiguousarray(beta, dtype=np.float32)
    cdef Py_ssize_t nb = xv.shape[0], c = xv.shape[1], t = xv.shape[2]
    cdef double n = <double>(nb * t)
    cdef double[::1] mean = np.empty(c, dtype=np.float64)
    cdef double[::1] var = np.empty(c, dtype=np.float64)
    cdef float[::1] inv_std = np.empty(c, dtype=np.float32)
    cdef float[:, :, ::1] xhat = np.empty((nb, c, t), dtype=np.float32)
    cdef float[:, :, ::1] y = np.empty((nb, c, t), dtype=np.float32)
    cdef Py_ssize_t b, ch, i
    cdef double s, d
    cdef float mf, isd, gg, be, xc
    with nogil:
        for ch in range(c):
            s = 0.0
            for b in range(nb):
                for i in range(t):
                    s = s + xv[b, ch, i]
            mean[ch] = s / n
            mf = <float>mean[ch]
            s = 0.0
            for b in range(nb):
                for i in range(t):
                    d = <double>(xv[b, ch, i] - mf)
                    s = s + d * d
            var[ch] = s / n
            isd = <float>(1.0 / sqrt(var[ch] + eps))
            inv_std[ch] = isd
            gg = gv[ch]
            be = bv[ch]
            for b in range(nb):
                for i in range(t):
                    xc = (xv[b, ch, i] - mf) * isd
                    xhat[b, ch, i] = xc
                    y[b, ch, i] = xc * gg + be
    return np.asarray(y), np.asarray(mean), np.asarray(var), (np.asarray(xhat), np.asarray(inv_std))


def batchnorm_train_backward(ctx, gamma, gy):
    xhat_obj, inv_obj = ctx
    cdef const float[:, :, ::1] xhat = xhat_obj
    cdef const float[::1] inv_std = inv_obj
    cdef const float[::1] gv = np.ascontiguousarray(gamma, dtype=np.float32)
    cdef const float[:, :, ::1] g = np.ascontiguousarray(gy, dtype=np.float32)
    cdef Py_ssize_t nb = g.shape[0], c = g.shape[1], t = g.shape[2]
    cdef double n = <double>(nb * t)
    cdef float[:, :, ::1] gx = np.empty((nb, c, t), dtype=np.float32)
    cdef float[::1] ggamma = np.empty(c, dtype=np.float32)
    cdef float[::1] gbeta = np.empty(c, dtype=np.float32)
    cdef Py_ssize_t b, ch, i
    cdef double sg, sgx
    cdef float mg, mgx, scale
    with nogil:
        for ch in range(c):
            sg = 0.0
            sgx = 0.0
            for b in range(nb):
                for i in range(t):
                    sg = sg + g[b, ch, i]
                    sgx = sgx + <double>g[b, ch, i] * xhat[b, ch, i]
            gbeta[ch] = <float>sg
            ggamma[ch] = <float>sgx
            mg = <float>(sg / n)
            mgx = <float>(sgx / n)
            scale = gv[ch] * inv_std[ch]
            for b in range(nb):
                for i in range(t):
                    gx[b, ch, i] = (g[b, ch, i] - mg - xhat[b, ch, i] * mgx) * scale
    return np.asarray(gx), np.asarray(ggamma), np.asarray(gbeta)
