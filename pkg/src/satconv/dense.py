"""Vectorized dense convolution, the production counterpart of oracle.naive_conv.

Used by the dense depth-wise layers in the toy networks and as the honest
O(k^2) baseline in the benchmark harness. Zero padding, centered window
(anchor (size-1)//2), optional dilation. Cross-checked against the loop
oracle in the test suite.
"""

from __future__ import annotations

import numpy as np


def _pads(kh, kw, ay, ax, d):
    return (ay * d, (kh - 1 - ay) * d), (ax * d, (kw - 1 - ax) * d)


def conv2d(plane, kernel, dilation: int = 1) -> np.ndarray:
    plane = np.asarray(plane, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    h, w = plane.shape
    kh, kw = kernel.shape
    ay, ax = (kh - 1) // 2, (kw - 1) // 2
    (pt, pb), (pl, pr) = _pads(kh, kw, ay, ax, dilation)
    padded = np.pad(plane, ((pt, pb), (pl, pr)))
    out = np.zeros((h, w))
    for u in range(kh):
        for v in range(kw):
            out += kernel[u, v] * padded[u * dilation : u * dilation + h,
                                         v * dilation : v * dilation + w]
    return out


def conv2d_input_grad(kernel, grad_out, dilation: int = 1) -> np.ndarray:
    kernel = np.asarray(kernel, dtype=np.float64)
    g = np.asarray(grad_out, dtype=np.float64)
    h, w = g.shape
    kh, kw = kernel.shape
    ay, ax = (kh - 1) // 2, (kw - 1) // 2
    # correlation with the flipped kernel: pad so index (kh-1-u)*d stays in range
    padded = np.pad(g, (((kh - 1 - ay) * dilation, ay * dilation),
                        ((kw - 1 - ax) * dilation, ax * dilation)))
    out = np.zeros((h, w))
    for u in range(kh):
        for v in range(kw):
            y0 = (kh - 1 - u) * dilation
            x0 = (kw - 1 - v) * dilation
            out += kernel[u, v] * padded[y0 : y0 + h, x0 : x0 + w]
    return out


def conv2d_kernel_grad(plane, grad_out, kshape, dilation: int = 1) -> np.ndarray:
    plane = np.asarray(plane, dtype=np.float64)
    g = np.asarray(grad_out, dtype=np.float64)
    h, w = plane.shape
    kh, kw = kshape
    ay, ax = (kh - 1) // 2, (kw - 1) // 2
    (pt, pb), (pl, pr) = _pads(kh, kw, ay, ax, dilation)
    padded = np.pad(plane, ((pt, pb), (pl, pr)))
    gk = np.zeros((kh, kw))
    for u in range(kh):
        for v in range(kw):
            window = padded[u * dilation : u * dilation + h, v * dilation : v * dilation + w]
            gk[u, v] = float(np.sum(g * window))
    return gk
