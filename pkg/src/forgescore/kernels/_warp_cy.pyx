# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled warp kernels: backward bilinear warping and the fused
warp-and-squared-difference reduction used by the warping-error metric."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline double _clampd(double v, double lo, double hi) nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


def warp_image(double[:, :, ::1] src, double[:, :, ::1] flow):
    """Backward-warp [H,W,C] source by [H,W,2] flow with edge clamping."""
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    cdef Py_ssize_t c = src.shape[2]
    out_arr = np.empty((h, w, c), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t y, x, k, x0, y0, x1, y1
    cdef double gx, gy, fx, fy, p00, p01, p10, p11, top, bot
    cdef Py_ssize_t xmax = w - 2 if w >= 2 else 0
    cdef Py_ssize_t ymax = h - 2 if h >= 2 else 0
    with nogil:
        for y in range(h):
            for x in range(w):
                gx = _clampd(x + flow[y, x, 0], 0.0, w - 1.0)
                gy = _clampd(y + flow[y, x, 1], 0.0, h - 1.0)
                x0 = <Py_ssize_t>gx
                y0 = <Py_ssize_t>gy
                if x0 > xmax:
                    x0 = xmax
                if y0 > ymax:
                    y0 = ymax
                fx = gx - x0
                fy = gy - y0
                x1 = x0 + 1 if x0 + 1 < w else w - 1
                y1 = y0 + 1 if y0 + 1 < h else h - 1
                for k in range(c):
                    p00 = src[y0, x0, k]
                    p01 = src[y0, x1, k]
                    p10 = src[y1, x0, k]
                    p11 = src[y1, x1, k]
                    top = p00 + fx * (p01 - p00)
                    bot = p10 + fx * (p11 - p10)
                    out[y, x, k] = top + fy * (bot - top)
    return out_arr


def warp_error_pair(
    double[:, :, ::1] src,
    double[:, :, ::1] flow,
    double[:, :, ::1] tgt,
    Py_ssize_t border=0,
):
    """Mean squared difference between warp(src, flow) and tgt over the
    interior crop that excludes `border` pixels per side."""
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    cdef Py_ssize_t c = src.shape[2]
    cdef Py_ssize_t b = border
    cdef Py_ssize_t y, x, k, x0, y0, x1, y1
    cdef double gx, gy, fx, fy, p00, p01, p10, p11, top, bot, d
    cdef double acc = 0.0
    cdef Py_ssize_t count = (h - 2 * b) * (w - 2 * b) * c
    cdef Py_ssize_t xmax = w - 2 if w >= 2 else 0
    cdef Py_ssize_t ymax = h - 2 if h >= 2 else 0
    if count <= 0:
        raise ValueError("border leaves no interior pixels")
    with nogil:
        for y in range(b, h - b):
            for x in range(b, w - b):
                gx = _clampd(x + flow[y, x, 0], 0.0, w - 1.0)
                gy = _clampd(y + flow[y, x, 1], 0.0, h - 1.0)
                x0 = <Py_ssize_t>gx
                y0 = <Py_ssize_t>gy
                if x0 > xmax:
                    x0 = xmax
                if y0 > ymax:
                    y0 = ymax
                fx = gx - x0
                fy = gy - y0
                x1 = x0 + 1 if x0 + 1 < w else w - 1
                y1 = y0 + 1 if y0 + 1 < h else h - 1
                for k in range(c):
                    p00 = src[y0, x0, k]
                    p01 = src[y0, x1, k]
                    p10 = src[y1, x0, k]
                    p11 = src[y1, x1, k]
                    top = p00 + fx * (p01 - p00)
                    bot = p10 + fx * (p11 - p10)
                    d = (top + fy * (bot - top)) - tgt[y, x, k]
                    acc += d * d
    return acc / count
