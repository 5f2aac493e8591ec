"""Kernel-transform compositing: the mechanism the learned predictor rests on.

The next frame is formed by convolving the previous frame with a small bank
of normalized kernels (each candidate a locally-averaged copy of the frame)
and blending the candidates with per-pixel compositing masks, plus one extra
mask slot for a static background image. Because kernels and masks are
non-negative and sum to one, the output is a convex combination of previous
and background intensities and therefore stays inside [0, 1].
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, InvariantError
from .convops import replicate_pad, replicate_pad_grad


def _windows(xp: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Sliding (kh, kw) windows of a padded (B, H+, W+, C) array, as a view."""
    return np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))


def transform_batch(prev: np.ndarray, kernels: np.ndarray, masks: np.ndarray,
                    background: np.ndarray) -> tuple[np.ndarray, tuple]:
    """Batched kernel-transform compositing with per-sample kernels.

    prev (B, H, W, C); kernels (B, K, kh, kw) each normalized; masks
    (B, H, W, K+1) summing to one per pixel (slot K blends the background);
    background (B, H, W, C). Returns (out, cache).

    The contractions run as batched matmuls (one GEMM per batch member)
    rather than einsum, which would fall back to slow element loops here.
    """
    b, h, w, c = prev.shape
    _, k, kh, kw = kernels.shape
    xp = replicate_pad(prev, kh // 2, kh // 2, kw // 2, kw // 2)
    win = _windows(xp, kh, kw)  # (B, H, W, C, kh, kw), a view
    flat = np.ascontiguousarray(win.reshape(b, h * w * c, kh * kw))
    kern2 = kernels.reshape(b, k, kh * kw)
    # (B, HWC, kk) @ (B, kk, K) -> (B, HWC, K)
    cand = flat @ kern2.transpose(0, 2, 1)
    cand = cand.reshape(b, h, w, c, k)
    out = (cand * masks[..., None, :k]).sum(axis=-1)
    out += masks[..., k:] * background
    return out, (xp, prev.shape, kernels, masks, cand, background)


def transform_batch_grad(dout: np.ndarray, cache: tuple
                         ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (dprev, dkernels, dmasks, dbackground) of transform_batch."""
    xp, prev_shape, kernels, masks, cand, background = cache
    b, k, kh, kw = kernels.shape
    _, h, w, c = prev_shape
    flat = np.ascontiguousarray(_windows(xp, kh, kw).reshape(b, h * w * c, kh * kw))
    dmasks = np.empty_like(masks)
    dmasks[..., :k] = (cand * dout[..., None]).sum(axis=3)
    dmasks[..., k] = (dout * background).sum(axis=-1)
    dbackground = dout * masks[..., k:]
    dcand = dout[..., None] * masks[..., None, :k]        # (B, H, W, C, K)
    dcand_flat = dcand.reshape(b, h * w * c, k)
    # dkernels: (B, K, HWC) @ (B, HWC, kk) -> (B, K, kk)
    dkernels = (dcand_flat.transpose(0, 2, 1) @ flat).reshape(b, k, kh, kw)
    # dxp: scatter each kernel tap; (B, HWC, K) @ (B, K, kk) -> (B, HWC, kk)
    taps = (dcand_flat @ kernels.reshape(b, k, kh * kw)).reshape(b, h, w, c, kh, kw)
    dxp = np.zeros((b, h + 2 * (kh // 2), w + 2 * (kw // 2), c), dtype=dout.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i:i + h, j:j + w] += taps[:, :, :, :, i, j]
    dprev = replicate_pad_grad(dxp, kh // 2, kh // 2, kw // 2, kw // 2)
    return dprev, dkernels, dmasks, dbackground


def apply_transforms(prev: np.ndarray, kernels: np.ndarray, masks: np.ndarray,
                     background: np.ndarray) -> np.ndarray:
    """Compose one frame from ``prev`` via normalized kernels and masks.

    Single-image variant of transform_batch that also enforces the
    normalization invariants: kernels (K, kh, kw) non-negative and summing
    to one each, masks (H, W, K+1) non-negative and summing to one per
    pixel. Raises InvariantError on violation, DimensionError on mismatch.
    """
    prev = np.asarray(prev)
    kernels = np.asarray(kernels)
    masks = np.asarray(masks)
    background = np.asarray(background)
    if prev.ndim != 3 or background.shape != prev.shape:
        raise DimensionError(
            f"prev {prev.shape} and background {background.shape} must be (H, W, C)")
    if kernels.ndim != 3:
        raise DimensionError(f"kernels must be (K, kh, kw), got {kernels.shape}")
    k = kernels.shape[0]
    if masks.shape != prev.shape[:2] + (k + 1,):
        raise DimensionError(
            f"masks {masks.shape} must be (H, W, K+1) with K={k}")
    tol = 1e-4
    if kernels.min() < -tol or np.abs(kernels.sum(axis=(1, 2)) - 1.0).max() > tol:
        raise InvariantError("kernels must be non-negative and sum to 1 each")
    if masks.min() < -tol or np.abs(masks.sum(axis=-1) - 1.0).max() > tol:
        raise InvariantError("masks must be non-negative and sum to 1 per pixel")
    out, _ = transform_batch(prev[None], kernels[None], masks[None], background[None])
    return out[0]
