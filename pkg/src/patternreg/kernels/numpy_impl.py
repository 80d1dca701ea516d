"""Pure-numpy convolution and linear kernels.

Fallback backend for when numba is unavailable (or disabled via
PATTERNREG_BACKEND=numpy). Convolutions go through a per-sample im2col +
matmul; the per-sample structure keeps every output bitwise independent of
how samples are batched together, since the BLAS call sees identical shapes
no matter the batch size.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def pad_nchw(x: np.ndarray, padding: tuple[int, int]) -> np.ndarray:
    """Zero-pad the two trailing (spatial) axes of an NCHW array."""
    ph, pw = padding
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def _im2col(xp_n: np.ndarray, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    # xp_n: one padded sample [C, Hp, Wp] -> [Ho*Wo, C*kh*kw]
    win = sliding_window_view(xp_n, (kh, kw), axis=(1, 2))[:, ::sh, ::sw]
    c, ho, wo = win.shape[:3]
    return win.transpose(1, 2, 0, 3, 4).reshape(ho * wo, c * kh * kw)


def conv2d_forward(x, w, b, stride, padding):
    sh, sw = stride
    kh, kw = w.shape[2], w.shape[3]
    xp = pad_nchw(x, padding)
    n, _, hp, wp = xp.shape
    k = w.shape[0]
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1
    w2d = w.reshape(k, -1)
    out = np.empty((n, k, ho, wo), dtype=x.dtype)
    for i in range(n):
        cols = _im2col(xp[i], kh, kw, sh, sw)
        out[i] = (cols @ w2d.T + b).T.reshape(k, ho, wo)
    return out


def conv2d_backward(x, w, go, stride, padding, need_input=True,
                    need_weight=True, need_bias=True):
    sh, sw = stride
    ph, pw = padding
    n, c, h, wd = x.shape
    k, _, kh, kw = w.shape
    ho, wo = go.shape[2], go.shape[3]
    xp = pad_nchw(x, padding)
    hp, wp = xp.shape[2], xp.shape[3]
    w2d = w.reshape(k, -1)

    gx = gw = gb = None
    if need_bias:
        gb = go.sum(axis=(0, 2, 3))
    if need_weight:
        gw2d = np.zeros((k, c * kh * kw), dtype=x.dtype)
        for i in range(n):
            cols = _im2col(xp[i], kh, kw, sh, sw)
            gw2d += go[i].reshape(k, -1) @ cols
        gw = gw2d.reshape(k, c, kh, kw)
    if need_input:
        gxp = np.zeros((n, c, hp, wp), dtype=x.dtype)
        for i in range(n):
            # [Ho*Wo, C*kh*kw] gradient of the im2col matrix, folded back
            dcols = (go[i].reshape(k, -1).T @ w2d).reshape(ho, wo, c, kh, kw)
            for a in range(kh):
                for bj in range(kw):
                    gxp[i, :, a:a + ho * sh:sh, bj:bj + wo * sw:sw] += \
                        dcols[:, :, :, a, bj].transpose(2, 0, 1)
        gx = gxp[:, :, ph:ph + h, pw:pw + wd] if (ph or pw) else gxp
        gx = np.ascontiguousarray(gx)
    return gx, gw, gb


def linear_forward(x, w, b):
    n = x.shape[0]
    out = np.empty((n, w.shape[0]), dtype=x.dtype)
    # per-sample matvec: result for a sample does not depend on batch layout
    for i in range(n):
        out[i] = w @ x[i] + b
    return out


def linear_backward(x, w, go, need_input=True, need_weight=True,
                    need_bias=True):
    gx = gw = gb = None
    if need_bias:
        gb = go.sum(axis=0)
    if need_weight:
        gw = go.T @ x
    if need_input:
        n = x.shape[0]
        gx = np.empty_like(x)
        for i in range(n):
            gx[i] = go[i] @ w
    return gx, gw, gb
