"""Slow, obviously-correct baselines used by tests and benchmarks.

Nothing here is optimized, on purpose: the test strategy leans on these
being easy to audit. naive_conv is a literal quadruple loop over plain
Python floats; effective_kernel expands a sub-pixel box into the dense
weight array it is equivalent to, built from 1-D coverage profiles with a
closed form that never touches the table code it is used to check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boxes import BoxParams, box_geometry


@dataclass(frozen=True)
class DenseKernel:
    """Explicit dense weights; dilation > 1 spaces the taps on the input lattice."""

    weights: np.ndarray
    dilation: int = 1

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise ValueError(f"kernel must be rank 2, got shape {w.shape}")
        if self.dilation < 1:
            raise ValueError(f"dilation must be >= 1, got {self.dilation}")
        object.__setattr__(self, "weights", w)

    @property
    def size(self):
        return self.weights.shape

    @property
    def anchor(self):
        # output pixel sits at kernel index (size-1)//2 on each axis
        return (self.size[0] - 1) // 2, (self.size[1] - 1) // 2

    def receptive_extent(self) -> int:
        """Pixels spanned along one axis: (size - 1) * dilation + 1."""
        return (max(self.size) - 1) * self.dilation + 1

    def multadds_per_pixel(self) -> int:
        return self.size[0] * self.size[1]


def naive_conv(plane, kernel: DenseKernel) -> np.ndarray:
    """Direct quadruple loop with zero padding and a centered window."""
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    kh, kw = kernel.size
    ay, ax = kernel.anchor
    d = kernel.dilation
    src = plane.tolist()
    wts = kernel.weights.tolist()
    out = [[0.0] * w for _ in range(h)]
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for u in range(kh):
                sy = y + (u - ay) * d
                if sy < 0 or sy >= h:
                    continue
                row = src[sy]
                wrow = wts[u]
                for v in range(kw):
                    sx = x + (v - ax) * d
                    if 0 <= sx < w:
                        acc += wrow[v] * row[sx]
            out[y][x] = acc
    return np.array(out)


def coverage_profile(lo: float, hi: float, offsets) -> np.ndarray:
    """Per-pixel weight of the half-open coverage interval [lo, hi).

    A pixel at integer offset q occupies [q, q+1), so its weight is the
    overlap length clip(hi - q, 0, 1) - clip(lo - q, 0, 1).
    """
    q = np.asarray(offsets, dtype=np.float64)
    return np.clip(hi - q, 0.0, 1.0) - np.clip(lo - q, 0.0, 1.0)


def effective_kernel(box: BoxParams) -> DenseKernel:
    """Dense (k+1)-sized kernel equivalent to the sub-pixel box.

    Interior pixels weigh 1, edge strips carry their fractional coverage,
    corners the product; split variants sum their sub-boxes scaled by the
    sub-box weights. Entries land on offsets -(k-1)/2 .. (k-1)/2 + 1 with
    the anchor at the window center.
    """
    xs, ys, subs = box_geometry(box)
    k = box.max_kernel
    r = (k - 1) // 2
    offsets = np.arange(-r, r + 2)
    kern = np.zeros((k + 1, k + 1))
    for ixl, ixh, iyl, iyh, wgt in subs:
        px = coverage_profile(xs[ixl], xs[ixh], offsets)
        py = coverage_profile(ys[iyl], ys[iyh], offsets)
        kern += wgt * np.outer(py, px)
    return DenseKernel(kern)


def finite_diff(f, at: float, h: float = 1e-5) -> float:
    """Central difference (f(at+h) - f(at-h)) / 2h."""
    return (f(at + h) - f(at - h)) / (2.0 * h)


def rel_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-8)
