"""Gaussian kernels and 2D convolution with configurable borders.

Convolution here means correlation with the kernel taps; for the symmetric
Gaussian kernels used throughout the two are identical. A kernel of size
``n`` is anchored at index ``n // 2``.
"""
import math
import threading
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import kernels

BORDERS = ("replicate", "zero")


@dataclass(frozen=True)
class Kernel2D:
    taps: np.ndarray

    @property
    def size(self):
        return self.taps.shape[0]


def kernel_size(sigma, exact_paper_size=False):
    """Support of a sampled Gaussian: ceil(6*sigma + 1), bumped to odd by default."""
    # round() guards against 6*sigma landing a hair above an integer
    n = math.ceil(round(6.0 * sigma + 1.0, 9))
    if not exact_paper_size and n % 2 == 0:
        n += 1
    return n


def gaussian_taps(sigma, size=None, exact_paper_size=False):
    """Normalized 1D Gaussian taps sampled at integer offsets from the anchor."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    n = kernel_size(sigma, exact_paper_size) if size is None else int(size)
    x = np.arange(n, dtype=np.float64) - n // 2
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def gaussian_taps_dsigma(sigma, size):
    """Taps of a fixed-support Gaussian and their derivative with respect to sigma."""
    x = np.arange(size, dtype=np.float64) - size // 2
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    g /= g.sum()
    x2 = x * x / sigma ** 3
    dg = g * (x2 - np.dot(g, x2))
    return g, dg


def gaussian_kernel(sigma, exact_paper_size=False):
    g = gaussian_taps(sigma, exact_paper_size=exact_paper_size)
    taps = np.outer(g, g)
    return Kernel2D(taps / taps.sum())


class _CallCounter(threading.local):
    def __init__(self):
        self.stack = []


_counters = _CallCounter()


class ConvCounter:
    count = 0


@contextmanager
def count_convolutions():
    """Count Gaussian convolutions issued in this thread while the block runs."""
    c = ConvCounter()
    _counters.stack.append(c)
    try:
        yield c
    finally:
        _counters.stack.remove(c)


def _tick():
    for c in _counters.stack:
        c.count += 1


def _as_stack(img):
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 2:
        return a[None], True
    if a.ndim == 3:
        return a, False
    raise ValueError(f"expected a 2D image or a stack of images, got shape {a.shape}")


def _check_border(border):
    if border not in BORDERS:
        raise ValueError(f"unknown border policy {border!r}; expected one of {BORDERS}")


def convolve(img, k, border="replicate"):
    """Direct 2D convolution; accepts an image ``(H, W)`` or a stack ``(n, H, W)``."""
    _check_border(border)
    taps = k.taps if isinstance(k, Kernel2D) else np.asarray(k, dtype=np.float64)
    x, single = _as_stack(img)
    out = kernels.correlate2d(np.ascontiguousarray(x), taps,
                              taps.shape[0] // 2, taps.shape[1] // 2, border)
    return out[0] if single else out


def correlate_separable(img, row_taps, col_taps, border="replicate"):
    """Apply ``col_taps`` down the columns then ``row_taps`` along the rows."""
    _check_border(border)
    x, single = _as_stack(img)
    col_taps = np.asarray(col_taps, dtype=np.float64)
    row_taps = np.asarray(row_taps, dtype=np.float64)
    y = kernels.correlate_axis(np.ascontiguousarray(x), col_taps, col_taps.shape[0] // 2, 1, border)
    y = kernels.correlate_axis(y, row_taps, row_taps.shape[0] // 2, 2, border)
    return y[0] if single else y


def convolve_separable(img, sigma, border="replicate", exact_paper_size=False, size=None):
    """Gaussian smoothing via two 1D passes; matches :func:`convolve` with
    :func:`gaussian_kernel` up to rounding."""
    g = gaussian_taps(sigma, size=size, exact_paper_size=exact_paper_size)
    _tick()
    return correlate_separable(img, g, g, border)


def hadamard(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a * b
