"""NumPy fallback for the warp kernels.

Arithmetic is written in the same evaluation order as the compiled
kernel (lerp form, no fused multiply-add) so both backends agree to the
last bit on typical inputs.
"""

from __future__ import annotations

import numpy as np


def _gather_coords(shape_hw, flow):
    h, w = shape_hw
    gx = np.arange(w, dtype=np.float64)[None, :] + flow[..., 0]
    gy = np.arange(h, dtype=np.float64)[:, None] + flow[..., 1]
    np.clip(gx, 0.0, w - 1.0, out=gx)
    np.clip(gy, 0.0, h - 1.0, out=gy)
    x0 = np.minimum(np.floor(gx), max(w - 2, 0)).astype(np.intp)
    y0 = np.minimum(np.floor(gy), max(h - 2, 0)).astype(np.intp)
    fx = gx - x0
    fy = gy - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    return x0, x1, fx, y0, y1, fy


def warp_image(src: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Backward-warp [H,W,C] source by [H,W,2] flow with edge clamping."""
    h, w = src.shape[0], src.shape[1]
    x0, x1, fx, y0, y1, fy = _gather_coords((h, w), flow)
    p00 = src[y0, x0]
    p01 = src[y0, x1]
    p10 = src[y1, x0]
    p11 = src[y1, x1]
    fx = fx[..., None]
    fy = fy[..., None]
    top = p00 + fx * (p01 - p00)
    bot = p10 + fx * (p11 - p10)
    return top + fy * (bot - top)


def warp_error_pair(
    src: np.ndarray, flow: np.ndarray, tgt: np.ndarray, border: int = 0
) -> float:
    """Mean squared difference between warp(src, flow) and tgt.

    `border > 0` restricts the mean to the interior crop, excluding that
    many pixels on every side.
    """
    warped = warp_image(src, flow)
    h, w = src.shape[0], src.shape[1]
    b = border
    d = warped[b : h - b, b : w - b] - tgt[b : h - b, b : w - b]
    return float(np.mean(d * d))
