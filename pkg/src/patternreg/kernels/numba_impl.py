"""Numba-compiled convolution and linear kernels (default backend).

Convolutions run as a per-sample im2col copy (jitted loops) followed by one
small BLAS matmul per sample. Because every sample is processed through
identically-shaped operations, outputs are bitwise independent of batch
composition, and all accumulation loops run in a fixed order, so repeated
runs on the same machine reproduce exactly.

Requires scipy at runtime (numba's np.dot binds to scipy's BLAS).
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .numpy_impl import pad_nchw


@njit(cache=True, nogil=True)
def _im2col_fill(xpn, cols, kh, kw, sh, sw, ho, wo):
    c_in = xpn.shape[0]
    for oh in range(ho):
        for ow in range(wo):
            r = oh * wo + ow
            base = ow * sw
            q = 0
            for c in range(c_in):
                for i in range(kh):
                    ih = oh * sh + i
                    for j in range(kw):
                        cols[r, q] = xpn[c, ih, base + j]
                        q += 1


@njit(cache=True, nogil=True)
def _conv_fwd(xp, w2dt, b, sh, sw, kh, kw):
    n_b, c_in, hp, wp = xp.shape
    k_out = w2dt.shape[1]
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1
    out = np.empty((n_b, k_out, ho, wo), xp.dtype)
    cols = np.empty((ho * wo, c_in * kh * kw), xp.dtype)
    for n in range(n_b):
        _im2col_fill(xp[n], cols, kh, kw, sh, sw, ho, wo)
        res = np.dot(cols, w2dt)  # (ho*wo, k_out)
        for k in range(k_out):
            bv = b[k]
            for oh in range(ho):
                for ow in range(wo):
                    out[n, k, oh, ow] = res[oh * wo + ow, k] + bv
    return out


@njit(cache=True, nogil=True)
def _conv_bwd_input(go, w2d, sh, sw, kh, kw, c_in, hp, wp):
    n_b, k_out, ho, wo = go.shape
    gxp = np.zeros((n_b, c_in, hp, wp), go.dtype)
    for n in range(n_b):
        go2d = go[n].reshape(k_out, ho * wo)
        dcols = np.dot(go2d.T, w2d)  # (ho*wo, c*kh*kw)
        for oh in range(ho):
            for ow in range(wo):
                r = oh * wo + ow
                base = ow * sw
                q = 0
                for c in range(c_in):
                    for i in range(kh):
                        ih = oh * sh + i
                        for j in range(kw):
                            gxp[n, c, ih, base + j] += dcols[r, q]
                            q += 1
    return gxp


@njit(cache=True, nogil=True)
def _conv_bwd_weight(xp, go, sh, sw, kh, kw):
    n_b, c_in = xp.shape[0], xp.shape[1]
    k_out, ho, wo = go.shape[1], go.shape[2], go.shape[3]
    ckk = c_in * kh * kw
    gw2d = np.zeros((k_out, ckk), xp.dtype)
    cols = np.empty((ho * wo, ckk), xp.dtype)
    for n in range(n_b):
        _im2col_fill(xp[n], cols, kh, kw, sh, sw, ho, wo)
        go2d = go[n].reshape(k_out, ho * wo)
        gw2d += np.dot(go2d, cols)
    return gw2d


@njit(cache=True, nogil=True)
def _conv_bwd_bias(go):
    n_b, k_out, ho, wo = go.shape
    gb = np.zeros(k_out, go.dtype)
    for n in range(n_b):
        for k in range(k_out):
            s = gb[k]
            for oh in range(ho):
                for ow in range(wo):
                    s += go[n, k, oh, ow]
            gb[k] = s
    return gb


@njit(cache=True, nogil=True, fastmath=True)
def _linear_fwd(x, w, b):
    n_b, f_in = x.shape
    g_out = w.shape[0]
    out = np.empty((n_b, g_out), x.dtype)
    for n in range(n_b):
        for g in range(g_out):
            acc = x[n, 0] * w[g, 0]
            for f in range(1, f_in):
                acc += x[n, f] * w[g, f]
            out[n, g] = acc + b[g]
    return out


@njit(cache=True, nogil=True, fastmath=True)
def _linear_bwd_input(go, w):
    n_b, g_out = go.shape
    f_in = w.shape[1]
    gx = np.zeros((n_b, f_in), go.dtype)
    for n in range(n_b):
        for g in range(g_out):
            gv = go[n, g]
            for f in range(f_in):
                gx[n, f] += gv * w[g, f]
    return gx


@njit(cache=True, nogil=True, fastmath=True)
def _linear_bwd_weight(x, go):
    n_b, f_in = x.shape
    g_out = go.shape[1]
    gw = np.zeros((g_out, f_in), x.dtype)
    for n in range(n_b):
        for g in range(g_out):
            gv = go[n, g]
            for f in range(f_in):
                gw[g, f] += gv * x[n, f]
    return gw


def conv2d_forward(x, w, b, stride, padding):
    xp = pad_nchw(x, padding)
    k = w.shape[0]
    w2dt = np.ascontiguousarray(w.reshape(k, -1).T)
    return _conv_fwd(xp, w2dt, b, stride[0], stride[1], w.shape[2], w.shape[3])


def conv2d_backward(x, w, go, stride, padding, need_input=True,
                    need_weight=True, need_bias=True):
    sh, sw = stride
    ph, pw = padding
    k, c, kh, kw = w.shape
    go = np.ascontiguousarray(go)
    gx = gw = gb = None
    if need_bias:
        gb = _conv_bwd_bias(go)
    if need_weight:
        xp = pad_nchw(x, padding)
        gw = _conv_bwd_weight(xp, go, sh, sw, kh, kw).reshape(k, c, kh, kw)
    if need_input:
        hp, wp = x.shape[2] + 2 * ph, x.shape[3] + 2 * pw
        w2d = np.ascontiguousarray(w.reshape(k, -1))
        gxp = _conv_bwd_input(go, w2d, sh, sw, kh, kw, c, hp, wp)
        if ph or pw:
            gx = np.ascontiguousarray(
                gxp[:, :, ph:ph + x.shape[2], pw:pw + x.shape[3]])
        else:
            gx = gxp
    return gx, gw, gb


def linear_forward(x, w, b):
    return _linear_fwd(x, w, b)


def linear_backward(x, w, go, need_input=True, need_weight=True,
                    need_bias=True):
    go = np.ascontiguousarray(go)
    gx = gw = gb = None
    if need_bias:
        gb = go.sum(axis=0)
    if need_weight:
        gw = _linear_bwd_weight(x, go)
    if need_input:
        gx = _linear_bwd_input(go, w)
    return gx, gw, gb
