"""Array-level conv / pool kernels used by the layer classes.

Depthwise 3x3 runs through numba (the per-channel loops defeat BLAS);
full and 1x1 convolutions are reshaped into matrix products so OpenBLAS
does the heavy lifting. All functions are dtype-generic: float32 in
production, float64 for finite-difference checks.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from numpy.lib.stride_tricks import sliding_window_view


def pad1(x: np.ndarray) -> np.ndarray:
    """Zero-pad the last two axes by one pixel."""
    shape = x.shape[:-2] + (x.shape[-2] + 2, x.shape[-1] + 2)
    out = np.zeros(shape, dtype=x.dtype)
    out[..., 1:-1, 1:-1] = x
    return out


# ----------------------------------------------------------------------
# depthwise 3x3, stride 1, zero padding 1; x is (C, H, W)

@njit(cache=True, fastmath=True)
def _dw3x3_kernel(xp, w, out):
    C, H, W = out.shape
    for c in range(C):
        for i in range(H):
            for j in range(W):
                acc = 0.0
                for a in range(3):
                    for b in range(3):
                        acc += w[c, a, b] * xp[c, i + a, j + b]
                out[c, i, j] = acc


@njit(cache=True, fastmath=True)
def _dw3x3_wgrad_kernel(xp, gy, gw):
    # single pass over gy, accumulating all nine taps per channel
    C, H, W = gy.shape
    for c in range(C):
        a00 = a01 = a02 = a10 = a11 = a12 = a20 = a21 = a22 = 0.0
        for i in range(H):
            for j in range(W):
                g = gy[c, i, j]
                a00 += g * xp[c, i, j]
                a01 += g * xp[c, i, j + 1]
                a02 += g * xp[c, i, j + 2]
                a10 += g * xp[c, i + 1, j]
                a11 += g * xp[c, i + 1, j + 1]
                a12 += g * xp[c, i + 1, j + 2]
                a20 += g * xp[c, i + 2, j]
                a21 += g * xp[c, i + 2, j + 1]
                a22 += g * xp[c, i + 2, j + 2]
        gw[c, 0, 0] = a00
        gw[c, 0, 1] = a01
        gw[c, 0, 2] = a02
        gw[c, 1, 0] = a10
        gw[c, 1, 1] = a11
        gw[c, 1, 2] = a12
        gw[c, 2, 0] = a20
        gw[c, 2, 1] = a21
        gw[c, 2, 2] = a22


def dw3x3_forward(x: np.ndarray, w: np.ndarray, bias: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    _dw3x3_kernel(pad1(x), w, out)
    out += bias[:, None, None]
    return out


def dw3x3_input_grad(gy: np.ndarray, w: np.ndarray) -> np.ndarray:
    # correlation with the 180-degree flipped kernel, same padding
    wf = np.ascontiguousarray(w[:, ::-1, ::-1])
    gx = np.empty_like(gy)
    _dw3x3_kernel(pad1(gy), wf, gx)
    return gx


def dw3x3_weight_grad(x: np.ndarray, gy: np.ndarray) -> np.ndarray:
    gw = np.empty((x.shape[0], 3, 3), dtype=x.dtype)
    _dw3x3_wgrad_kernel(pad1(x), np.ascontiguousarray(gy), gw)
    return gw


# ----------------------------------------------------------------------
# full 3x3 convolution, stride 1, zero padding 1; x is (N, C, H, W)

def _im2col3(xp: np.ndarray, H: int, W: int) -> np.ndarray:
    # (N, C, H+2, W+2) -> (C*9, N*H*W), rows ordered (c, a, b)
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))  # (N, C, H, W, 3, 3)
    C = xp.shape[1]
    return win.transpose(1, 4, 5, 0, 2, 3).reshape(C * 9, -1)


def conv3x3_forward(x: np.ndarray, w: np.ndarray, bias: np.ndarray) -> np.ndarray:
    N, C, H, W = x.shape
    O = w.shape[0]
    cols = _im2col3(pad1(x), H, W)
    y = w.reshape(O, C * 9) @ cols
    y += bias[:, None]
    return np.ascontiguousarray(y.reshape(O, N, H, W).transpose(1, 0, 2, 3))


def conv3x3_backward(x: np.ndarray, w: np.ndarray, gy: np.ndarray):
    """Returns (gx, gw, gb) for conv3x3_forward."""
    N, C, H, W = x.shape
    O = w.shape[0]
    gy_flat = np.ascontiguousarray(gy.transpose(1, 0, 2, 3).reshape(O, -1))
    cols = _im2col3(pad1(x), H, W)
    gw = (gy_flat @ cols.T).reshape(O, C, 3, 3)
    gb = gy_flat.sum(axis=1)

    gcols = (w.reshape(O, C * 9).T @ gy_flat).reshape(C, 3, 3, N, H, W)
    gxp = np.zeros((N, C, H + 2, W + 2), dtype=x.dtype)
    for a in range(3):
        for b in range(3):
            gxp[:, :, a:a + H, b:b + W] += gcols[:, a, b].transpose(1, 0, 2, 3)
    return gxp[:, :, 1:-1, 1:-1], gw, gb


# ----------------------------------------------------------------------
# 1x1 convolution; x is (N, C, H, W), w is (O, C)

def _flatten_nchw(x: np.ndarray) -> np.ndarray:
    # (N, C, H, W) -> (C, N*H*W); free for N == 1
    if x.shape[0] == 1:
        return x.reshape(x.shape[1], -1)
    return np.ascontiguousarray(x.transpose(1, 0, 2, 3)).reshape(x.shape[1], -1)


def _unflatten_nchw(flat: np.ndarray, N: int, H: int, W: int) -> np.ndarray:
    C = flat.shape[0]
    if N == 1:
        return flat.reshape(1, C, H, W)
    return np.ascontiguousarray(flat.reshape(C, N, H, W).transpose(1, 0, 2, 3))


def pointwise_forward(x: np.ndarray, w: np.ndarray, bias: np.ndarray) -> np.ndarray:
    N, C, H, W = x.shape
    y = w @ _flatten_nchw(x)
    y += bias[:, None]
    return _unflatten_nchw(y, N, H, W)


def pointwise_backward(x: np.ndarray, w: np.ndarray, gy: np.ndarray):
    N, C, H, W = x.shape
    gy_flat = _flatten_nchw(gy)
    x_flat = _flatten_nchw(x)
    gx = _unflatten_nchw(w.T @ gy_flat, N, H, W)
    gw = gy_flat @ x_flat.T
    gb = gy_flat.sum(axis=1)
    return gx, gw, gb


# ----------------------------------------------------------------------
# pooling; x is (N, C, H, W)

def avgpool_forward(x: np.ndarray, k: int) -> np.ndarray:
    N, C, H, W = x.shape
    if H % k or W % k:
        raise ValueError(f"pool window {k} must divide spatial size {H}x{W}")
    return x.reshape(N, C, H // k, k, W // k, k).mean(axis=(3, 5))


def avgpool_backward(gy: np.ndarray, k: int) -> np.ndarray:
    N, C, Ho, Wo = gy.shape
    gx = np.empty((N, C, Ho * k, Wo * k), dtype=gy.dtype)
    gx.reshape(N, C, Ho, k, Wo, k)[:] = gy[:, :, :, None, :, None] / (k * k)
    return gx


def _adaptive_edges(size: int, out: int) -> list[tuple[int, int]]:
    return [(i * size // out, -((i + 1) * size // -out)) for i in range(out)]


def adaptive_avgpool_forward(x: np.ndarray, oh: int, ow: int) -> np.ndarray:
    N, C, H, W = x.shape
    y = np.empty((N, C, oh, ow), dtype=x.dtype)
    for i, (r0, r1) in enumerate(_adaptive_edges(H, oh)):
        for j, (c0, c1) in enumerate(_adaptive_edges(W, ow)):
            y[:, :, i, j] = x[:, :, r0:r1, c0:c1].mean(axis=(2, 3))
    return y


def adaptive_avgpool_backward(gy: np.ndarray, H: int, W: int) -> np.ndarray:
    N, C, oh, ow = gy.shape
    gx = np.zeros((N, C, H, W), dtype=gy.dtype)
    for i, (r0, r1) in enumerate(_adaptive_edges(H, oh)):
        for j, (c0, c1) in enumerate(_adaptive_edges(W, ow)):
            area = (r1 - r0) * (c1 - c0)
            gx[:, :, r0:r1, c0:c1] += gy[:, :, i, j, None, None] / area
    return gx
