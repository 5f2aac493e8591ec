"""Low-level array ops for the learned model: padded conv, resize, softmax.

Everything here is dtype-generic (float32 for training speed, float64 for
gradient checks) and comes in forward/backward pairs with explicit caches,
since the trainer backpropagates by hand. Convolutions use replicate padding
so shifting kernels behave sensibly at the image border.
"""

from __future__ import annotations

import numpy as np


def replicate_pad(x: np.ndarray, pt: int, pb: int, pl: int, pr: int) -> np.ndarray:
    """Edge-replicate padding of (B, H, W, C) along the spatial axes."""
    return np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)), mode="edge")


def replicate_pad_grad(gpad: np.ndarray, pt: int, pb: int, pl: int, pr: int) -> np.ndarray:
    """Fold the gradient of a replicate-padded array back onto the original.

    Padded cells replicate border cells, so their gradients accumulate onto
    the border; rows fold first, then columns, which routes the corner pads
    onto the corner pixels.
    """
    g = gpad.copy()
    if pt:
        g[:, pt] += g[:, :pt].sum(axis=1)
    if pb:
        g[:, -pb - 1] += g[:, -pb:].sum(axis=1)
    g = g[:, pt:g.shape[1] - pb if pb else None]
    if pl:
        g[:, :, pl] += g[:, :, :pl].sum(axis=2)
    if pr:
        g[:, :, -pr - 1] += g[:, :, -pr:].sum(axis=2)
    return g[:, :, pl:g.shape[2] - pr if pr else None]


def conv_pads(in_size: int, stride: int, ksize: int) -> tuple[int, int]:
    """(left, right) padding so output position i centers on input i*stride."""
    out = -(-in_size // stride)
    half = ksize // 2
    right = max(0, (out - 1) * stride + half - (in_size - 1))
    return half, right


def _strided_windows(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """im2col: (B, Ho, Wo, kh*kw*Cin) copy laid out for one flat matmul."""
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    win = win[:, ::stride, ::stride]          # (B, Ho, Wo, Cin, kh, kw)
    win = win.transpose(0, 1, 2, 4, 5, 3)     # (B, Ho, Wo, kh, kw, Cin)
    b, ho, wo = win.shape[:3]
    return np.ascontiguousarray(win).reshape(b, ho, wo, -1)


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1
           ) -> tuple[np.ndarray, tuple]:
    """Replicate-padded 2-D convolution.

    x is (B, H, W, Cin), w is (kh, kw, Cin, Cout), b is (Cout,). Output is
    (B, ceil(H/stride), ceil(W/stride), Cout). Returns (y, cache). The
    contraction runs as a single GEMM over im2col patches.
    """
    kh, kw = w.shape[:2]
    pt, pb = conv_pads(x.shape[1], stride, kh)
    pl, pr = conv_pads(x.shape[2], stride, kw)
    xp = replicate_pad(x, pt, pb, pl, pr)
    cols = _strided_windows(xp, kh, kw, stride)
    y = cols @ w.reshape(-1, w.shape[3]) + b
    return y, (cols, xp.shape, x.shape, w, stride, (pt, pb, pl, pr))


def conv2d_grad(dy: np.ndarray, cache: tuple
                ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (dx, dw, db) of conv2d given upstream dy."""
    cols, xp_shape, x_shape, w, stride, (pt, pb, pl, pr) = cache
    kh, kw = w.shape[:2]
    cout = w.shape[3]
    dw = (cols.reshape(-1, cols.shape[-1]).T
          @ dy.reshape(-1, cout)).reshape(kh, kw, w.shape[2], cout)
    db = dy.sum(axis=(0, 1, 2))
    dxp = np.zeros(xp_shape, dtype=dy.dtype)
    ho, wo = dy.shape[1], dy.shape[2]
    for i in range(kh):
        for j in range(kw):
            # each kernel tap maps output (h, w) onto padded input
            # (h*stride + i, w*stride + j)
            dxp[:, i:i + ho * stride:stride, j:j + wo * stride:stride] += dy @ w[i, j].T
    dx = replicate_pad_grad(dxp, pt, pb, pl, pr)
    assert dx.shape == x_shape
    return dx, dw, db


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_grad(dp: np.ndarray, p: np.ndarray, axis: int = -1) -> np.ndarray:
    inner = (dp * p).sum(axis=axis, keepdims=True)
    return p * (dp - inner)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def nearest_resize(x: np.ndarray, h_out: int, w_out: int) -> np.ndarray:
    """Nearest-neighbour resize of (B, H, W, C) to (B, h_out, w_out, C)."""
    b, h, w, c = x.shape
    ri = (np.arange(h_out) * h) // h_out
    ci = (np.arange(w_out) * w) // w_out
    return x[:, ri][:, :, ci]

def nearest_resize_grad(dy: np.ndarray, h_in: int, w_in: int) -> np.ndarray:
    """Scatter-add the gradient of nearest_resize back to the small grid."""
    b, h_out, w_out, c = dy.shape
    ri = (np.arange(h_out) * h_in) // h_out
    ci = (np.arange(w_out) * w_in) // w_out
    tmp = np.zeros((b, h_in, w_out, c), dtype=dy.dtype)
    np.add.at(tmp, (slice(None), ri), dy)
    dx = np.zeros((b, h_in, w_in, c), dtype=dy.dtype)
    np.add.at(dx, (slice(None), slice(None), ci), tmp)
    return dx
