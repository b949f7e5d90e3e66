"""Convolution and pooling kernels for the prototype network.

Two implementations of the same contract: numba @njit loops and a pure
numpy (im2col/BLAS) fallback. emgopen.backend picks one at import time
via EMG_OPEN_BACKEND. All arrays are float64, layout (B, C, H, W),
valid padding, square kernels.
"""

import numpy as np

from .backend import USE_NUMBA


def _out_hw(h, w, k, stride):
    return (h - k) // stride + 1, (w - k) // stride + 1


# ---------------------------------------------------------------- numpy path

def _im2col(x, k, stride):
    # (B, C, H, W) -> (B, Ho*Wo, C*k*k) window view, then a copy on reshape
    b, c, h, w = x.shape
    ho, wo = _out_hw(h, w, k, stride)
    s0, s1, s2, s3 = x.strides
    cols = np.lib.stride_tricks.as_strided(
        x, (b, ho, wo, c, k, k), (s0, s2 * stride, s3 * stride, s1, s2, s3)
    )
    return cols.reshape(b, ho * wo, c * k * k)


def _conv_forward_np(x, w, bias, stride):
    b = x.shape[0]
    o, c, k, _ = w.shape
    ho, wo = _out_hw(x.shape[2], x.shape[3], k, stride)
    cols = _im2col(x, k, stride)
    y = cols @ w.reshape(o, -1).T + bias
    return y.transpose(0, 2, 1).reshape(b, o, ho, wo)


def _conv_backward_np(x, w, stride, dy):
    b, c, h, wd = x.shape
    o, _, k, _ = w.shape
    ho, wo = _out_hw(h, wd, k, stride)
    cols = _im2col(x, k, stride).reshape(b * ho * wo, c * k * k)
    dy2 = dy.transpose(0, 2, 3, 1).reshape(b * ho * wo, o)
    dw = (dy2.T @ cols).reshape(w.shape)
    db = dy.sum(axis=(0, 2, 3))
    dcols = (dy2 @ w.reshape(o, -1)).reshape(b, ho, wo, c, k, k)
    dx = np.zeros_like(x)
    for p in range(k):
        for q in range(k):
            dx[:, :, p : p + stride * ho : stride, q : q + stride * wo : stride] += (
                dcols[:, :, :, :, p, q].transpose(0, 3, 1, 2)
            )
    return dx, dw, db


def _maxpool_forward_np(x, p):
    b, c, h, w = x.shape
    ho, wo = h // p, w // p
    win = x[:, :, : ho * p, : wo * p].reshape(b, c, ho, p, wo, p)
    win = win.transpose(0, 1, 2, 4, 3, 5).reshape(b, c, ho, wo, p * p)
    idx = win.argmax(axis=-1)
    y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return y, idx.astype(np.int64)


def _maxpool_backward_np(dy, idx, p, h, w):
    b, c, ho, wo = dy.shape
    dwin = np.zeros((b, c, ho, wo, p * p))
    np.put_along_axis(dwin, idx[..., None], dy[..., None], axis=-1)
    dwin = dwin.reshape(b, c, ho, wo, p, p).transpose(0, 1, 2, 4, 3, 5)
    dx = np.zeros((b, c, h, w))
    dx[:, :, : ho * p, : wo * p] = dwin.reshape(b, c, ho * p, wo * p)
    return dx


# ---------------------------------------------------------------- numba path

if USE_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _im2col_nb(x, k, stride):
        b, c, h, w = x.shape
        ho = (h - k) // stride + 1
        wo = (w - k) // stride + 1
        cols = np.empty((b * ho * wo, c * k * k))
        for n in range(b):
            for i in range(ho):
                for j in range(wo):
                    row = (n * ho + i) * wo + j
                    col = 0
                    for ch in range(c):
                        for p in range(k):
                            for q in range(k):
                                cols[row, col] = x[n, ch, i * stride + p, j * stride + q]
                                col += 1
        return cols

    @njit(cache=True)
    def _conv_forward_nb(x, w, bias, stride):
        b, c, h, wd = x.shape
        o = w.shape[0]
        k = w.shape[2]
        ho = (h - k) // stride + 1
        wo = (wd - k) // stride + 1
        cols = _im2col_nb(x, k, stride)
        w2 = np.ascontiguousarray(w.reshape(o, c * k * k).T)
        y2 = np.dot(cols, w2)
        y = np.empty((b, o, ho, wo))
        for n in range(b):
            for i in range(ho):
                for j in range(wo):
                    row = (n * ho + i) * wo + j
                    for f in range(o):
                        y[n, f, i, j] = y2[row, f] + bias[f]
        return y

    @njit(cache=True)
    def _conv_backward_nb(x, w, stride, dy):
        b, c, h, wd = x.shape
        o = w.shape[0]
        k = w.shape[2]
        ho = (h - k) // stride + 1
        wo = (wd - k) // stride + 1
        cols = _im2col_nb(x, k, stride)
        dy2 = np.empty((b * ho * wo, o))
        db = np.zeros(o)
        for n in range(b):
            for f in range(o):
                for i in range(ho):
                    for j in range(wo):
                        g = dy[n, f, i, j]
                        dy2[(n * ho + i) * wo + j, f] = g
                        db[f] += g
        dw = np.dot(dy2.T, cols).reshape(o, c, k, k)
        dcols = np.dot(dy2, np.ascontiguousarray(w.reshape(o, c * k * k)))
        dx = np.zeros((b, c, h, wd))
        for n in range(b):
            for i in range(ho):
                for j in range(wo):
                    row = (n * ho + i) * wo + j
                    col = 0
                    for ch in range(c):
                        for p in range(k):
                            for q in range(k):
                                dx[n, ch, i * stride + p, j * stride + q] += dcols[row, col]
                                col += 1
        return dx, np.ascontiguousarray(dw), db

    @njit(cache=True)
    def _maxpool_forward_nb(x, p):
        b, c, h, w = x.shape
        ho = h // p
        wo = w // p
        y = np.empty((b, c, ho, wo))
        idx = np.empty((b, c, ho, wo), dtype=np.int64)
        for n in range(b):
            for ch in range(c):
                for i in range(ho):
                    for j in range(wo):
                        best = x[n, ch, i * p, j * p]
                        arg = 0
                        for u in range(p):
                            for v in range(p):
                                val = x[n, ch, i * p + u, j * p + v]
                                if val > best:
                                    best = val
                                    arg = u * p + v
                        y[n, ch, i, j] = best
                        idx[n, ch, i, j] = arg
        return y, idx

    @njit(cache=True)
    def _maxpool_backward_nb(dy, idx, p, h, w):
        b, c, ho, wo = dy.shape
        dx = np.zeros((b, c, h, w))
        for n in range(b):
            for ch in range(c):
                for i in range(ho):
                    for j in range(wo):
                        arg = idx[n, ch, i, j]
                        dx[n, ch, i * p + arg // p, j * p + arg % p] = dy[n, ch, i, j]
        return dx

    conv_forward = _conv_forward_nb
    conv_backward = _conv_backward_nb
    maxpool_forward = _maxpool_forward_nb
    maxpool_backward = _maxpool_backward_nb
else:
    conv_forward = _conv_forward_np
    conv_backward = _conv_backward_np
    maxpool_forward = _maxpool_forward_np
    maxpool_backward = _maxpool_backward_np

# fallback interface is always importable, for the backend benchmark
numpy_kernels = (
    _conv_forward_np,
    _conv_backward_np,
    _maxpool_forward_np,
    _maxpool_backward_np,
)
