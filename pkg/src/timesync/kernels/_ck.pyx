# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernel backend: fused bias+mask+softmax and layer norm.

Same contracts as ref.py; these exist because the models here run many
small attention matrices where per-op numpy dispatch and temporaries
dominate the wall clock.
"""

import numpy as np

from libc.math cimport exp, sqrt, INFINITY

NAME = "compiled"

_DUMMY2 = np.zeros((1, 1), dtype=np.float64)
_DUMMY1 = np.zeros(1, dtype=np.float64)
_DUMMYM = np.zeros((1, 1), dtype=np.uint8)


cdef void _softmax_rows(double[:, :, ::1] sc, double[:, ::1] delta,
                        double[::1] slopes, unsigned char[:, ::1] mask,
                        double inv_scale, bint after, bint has_bias,
                        bint has_mask) noexcept nogil:
    cdef Py_ssize_t nh = sc.shape[0], nq = sc.shape[1], nk = sc.shape[2]
    cdef Py_ssize_t h, i, j
    cdef double s, peak, total, slope
    for h in range(nh):
        slope = slopes[h] if has_bias else 0.0
        for i in range(nq):
            peak = -INFINITY
            for j in range(nk):
                if has_mask and mask[i, j] == 0:
                    continue
                s = sc[h, i, j]
                if has_bias:
                    if after:
                        s = s * inv_scale + slope * delta[i, j]
                    else:
                        s = (s + slope * delta[i, j]) * inv_scale
                else:
                    s = s * inv_scale
                sc[h, i, j] = s
                if s > peak:
                    peak = s
            total = 0.0
            for j in range(nk):
                if has_mask and mask[i, j] == 0:
                    sc[h, i, j] = 0.0
                else:
                    s = exp(sc[h, i, j] - peak)
                    sc[h, i, j] = s
                    total += s
            if total > 0.0:
                for j in range(nk):
                    sc[h, i, j] /= total


def bias_mask_softmax(scores, delta, slopes, mask, double inv_scale,
                      bint bias_after_scale):
    cdef bint has_bias = delta is not None
    cdef bint has_mask = mask is not None
    cdef double[:, :, ::1] sc = scores
    cdef double[:, ::1] dv = delta if has_bias else _DUMMY2
    cdef double[::1] sl = slopes if has_bias else _DUMMY1
    cdef unsigned char[:, ::1] mv = mask if has_mask else _DUMMYM
    with nogil:
        _softmax_rows(sc, dv, sl, mv, inv_scale, bias_after_scale,
                      has_bias, has_mask)
    return scores


def masked_softmax_backward(weights, gweights, double inv_scale):
    out = np.empty_like(weights)
    cdef double[:, :, ::1] w = weights
    cdef double[:, :, ::1] gw = gweights
    cdef double[:, :, ::1] o = out
    cdef Py_ssize_t nh = w.shape[0], nq = w.shape[1], nk = w.shape[2]
    cdef Py_ssize_t h, i, j
    cdef double inner
    with nogil:
        for h in range(nh):
            for i in range(nq):
                inner = 0.0
                for j in range(nk):
                    inner += w[h, i, j] * gw[h, i, j]
                for j in range(nk):
                    o[h, i, j] = w[h, i, j] * (gw[h, i, j] - inner) * inv_scale
    return out


def layer_norm_forward(x, gain, bias, double eps):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    y = np.empty_like(x)
    mean = np.empty(n, dtype=np.float64)
    inv_std = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] xv = x
    cdef double[:, ::1] yv = y
    cdef double[::1] gv = gain
    cdef double[::1] bv = bias
    cdef double[::1] mv = mean
    cdef double[::1] sv = inv_std
    cdef Py_ssize_t i, j
    cdef double mu, var, c, istd
    with nogil:
        for i in range(n):
            mu = 0.0
            for j in range(d):
                mu += xv[i, j]
            mu /= d
            var = 0.0
            for j in range(d):
                c = xv[i, j] - mu
                var += c * c
            var /= d
            istd = 1.0 / sqrt(var + eps)
            mv[i] = mu
            sv[i] = istd
            for j in range(d):
                yv[i, j] = (xv[i, j] - mu) * istd * gv[j] + bv[j]
    return y, mean, inv_std


def layer_norm_backward(g, x, mean, inv_std, gain):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    dx = np.empty_like(x)
    dgain = np.zeros(x.shape[1], dtype=np.float64)
    dbias = np.zeros(x.shape[1], dtype=np.float64)
    cdef double[:, ::1] gv = g
    cdef double[:, ::1] xv = x
    cdef double[::1] mv = mean
    cdef double[::1] sv = inv_std
    cdef double[::1] gnv = gain
    cdef double[:, ::1] dxv = dx
    cdef double[::1] dgv = dgain
    cdef double[::1] dbv = dbias
    cdef Py_ssize_t i, j
    cdef double xhat, dxh, m1, m2, istd
    with nogil:
        for i in range(n):
            istd = sv[i]
            m1 = 0.0
            m2 = 0.0
            for j in range(d):
                xhat = (xv[i, j] - mv[i]) * istd
                dxh = gv[i, j] * gnv[j]
                dgv[j] += gv[i, j] * xhat
                dbv[j] += gv[i, j]
                m1 += dxh
                m2 += dxh * xhat
            m1 /= d
            m2 /= d
            for j in range(d):
                xhat = (xv[i, j] - mv[i]) * istd
                dxv[i, j] = (gv[i, j] * gnv[j] - m1 - xhat * m2) * istd
    return dx, dgain, dbias
