"""Bilinear warping, the warping-error metric behind the motion and
spatial anomaly scores, and the robustness perturbation operators.

Flow semantics: a flow field is a backward correspondence on the target
grid.  The warped value at target pixel p is the source sampled at
p + flow(p) with (dx, dy) in pixels, dx along width.  Sampling outside
the image clamps to the nearest edge, so warping is a total function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DataError
from .tensorio import VideoManifest, load_depth, load_flow, load_frames


@dataclass(frozen=True)
class WarpErrorReport:
    """Per-pair mean squared warp differences and their mean."""

    per_pair: list[float]
    total: float


def bilinear_sample(field: np.ndarray, x: float, y: float):
    """Sample [H,W] or [H,W,C] at fractional (x, y), clamped to the edge.

    x runs along width, y along height.  Integer coordinates return the
    stored value exactly.
    """
    if field.ndim not in (2, 3) or field.shape[0] < 1 or field.shape[1] < 1:
        raise DataError(f"field must be [H,W] or [H,W,C], got {field.shape}")
    h, w = field.shape[0], field.shape[1]
    gx = min(max(float(x), 0.0), w - 1.0)
    gy = min(max(float(y), 0.0), h - 1.0)
    x0 = min(int(math.floor(gx)), max(w - 2, 0))
    y0 = min(int(math.floor(gy)), max(h - 2, 0))
    fx = gx - x0
    fy = gy - y0
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    p00 = field[y0, x0]
    p01 = field[y0, x1]
    p10 = field[y1, x0]
    p11 = field[y1, x1]
    top = p00 + fx * (p01 - p00)
    bot = p10 + fx * (p11 - p10)
    return top + fy * (bot - top)


def _as_hwc(img: np.ndarray) -> tuple[np.ndarray, bool]:
    if img.ndim == 2:
        return np.ascontiguousarray(img[:, :, None], dtype=np.float64), True
    if img.ndim == 3:
        return np.ascontiguousarray(img, dtype=np.float64), False
    raise DataError(f"expected [H,W] or [H,W,C], got shape {img.shape}")


def warp(source: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Backward-warp a [H,W] or [H,W,C] image by a [H,W,2] flow field."""
    src, squeeze = _as_hwc(source)
    if flow.shape != (src.shape[0], src.shape[1], 2):
        raise DataError(
            f"flow shape {flow.shape} does not match image {source.shape}"
        )
    out = kernels.warp_image(src, np.ascontiguousarray(flow, dtype=np.float64))
    return out[:, :, 0] if squeeze else out


def warping_error(
    seq: np.ndarray, flows: np.ndarray, border: int = 0
) -> WarpErrorReport:
    """Warping error of a frame or depth sequence against its flow.

    For each consecutive pair, frame t is warped by flow t and compared
    with frame t+1; the pair error is the mean squared difference over
    pixels and channels, and the total is the mean over pairs.  Depth
    sequences ([T,H,W]) are treated as single-channel frames.
    """
    if seq.ndim == 3:
        seq = seq[:, :, :, None]
    if seq.ndim != 4:
        raise DataError(f"sequence must be [T,H,W(,C)], got {seq.shape}")
    t, h, w = seq.shape[0], seq.shape[1], seq.shape[2]
    if t < 2:
        raise DataError(f"need at least 2 frames, got {t}")
    if flows.shape != (t - 1, h, w, 2):
        raise DataError(
            f"flow shape {flows.shape} does not match sequence "
            f"{seq.shape} (want {(t - 1, h, w, 2)})"
        )
    if border < 0 or 2 * border >= min(h, w):
        raise DataError(f"border {border} leaves no interior pixels")
    seq = np.ascontiguousarray(seq, dtype=np.float64)
    flows = np.ascontiguousarray(flows, dtype=np.float64)
    per_pair = [
        float(kernels.warp_error_pair(seq[i], flows[i], seq[i + 1], border))
        for i in range(t - 1)
    ]
    return WarpErrorReport(per_pair=per_pair, total=float(np.mean(per_pair)))


def motion_anomaly_score(m: VideoManifest) -> float:
    """Warping error of the RGB frames; higher means more anomalous."""
    frames = load_frames(m)
    flows = load_flow(m, "frame_flow")
    return warping_error(frames, flows).total


def spatial_anomaly_score(m: VideoManifest) -> float:
    """Warping error of the depth sequence; higher means more anomalous."""
    depth = load_depth(m)
    flows = load_flow(m, "depth_flow")
    return warping_error(depth, flows).total


def gaussian_kernel_1d(sigma: float) -> np.ndarray:
    """Sampled Gaussian truncated at radius ceil(3*sigma), sum 1."""
    if sigma <= 0:
        raise DataError(f"sigma must be > 0, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (xs / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(frame: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with edge-clamped borders."""
    img, squeeze = _as_hwc(frame)
    k = gaussian_kernel_1d(sigma)
    r = (len(k) - 1) // 2
    h, w = img.shape[0], img.shape[1]
    padded = np.pad(img, ((r, r), (0, 0), (0, 0)), mode="edge")
    rows = np.zeros_like(img)
    for i in range(2 * r + 1):
        rows += k[i] * padded[i : i + h]
    padded = np.pad(rows, ((0, 0), (r, r), (0, 0)), mode="edge")
    out = np.zeros_like(img)
    for i in range(2 * r + 1):
        out += k[i] * padded[:, i : i + w]
    return out[:, :, 0] if squeeze else out


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resample to (out_h, out_w) with endpoint-aligned bilinear sampling."""
    src, squeeze = _as_hwc(img)
    h, w = src.shape[0], src.shape[1]
    if out_h < 1 or out_w < 1:
        raise DataError(f"degenerate output dims ({out_h}, {out_w})")
    ys = (
        np.linspace(0.0, h - 1.0, out_h)
        if out_h > 1
        else np.array([(h - 1) / 2.0])
    )
    xs = (
        np.linspace(0.0, w - 1.0, out_w)
        if out_w > 1
        else np.array([(w - 1) / 2.0])
    )
    y0 = np.minimum(np.floor(ys), max(h - 2, 0)).astype(np.intp)
    x0 = np.minimum(np.floor(xs), max(w - 2, 0)).astype(np.intp)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    p00 = src[np.ix_(y0, x0)]
    p01 = src[np.ix_(y0, x1)]
    p10 = src[np.ix_(y1, x0)]
    p11 = src[np.ix_(y1, x1)]
    top = p00 + fx * (p01 - p00)
    bot = p10 + fx * (p11 - p10)
    out = top + fy * (bot - top)
    return out[:, :, 0] if squeeze else out


def resize(frame: np.ndarray, ratio: float) -> np.ndarray:
    """Shape-preserving resize perturbation: bilinear downscale by
    `ratio` then bilinear upscale back to the original size."""
    if not 0 < ratio <= 1:
        raise DataError(f"ratio must be in (0, 1], got {ratio}")
    h, w = frame.shape[0], frame.shape[1]
    small_h = math.floor(ratio * h)
    small_w = math.floor(ratio * w)
    if small_h < 1 or small_w < 1:
        raise DataError(
            f"ratio {ratio} collapses {h}x{w} below one pixel"
        )
    small = bilinear_resize(frame, small_h, small_w)
    return bilinear_resize(small, h, w)
