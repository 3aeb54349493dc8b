"""Pure numpy implementations of the convolution kernels.

Used when the compiled extension is unavailable, and as the reference the
compiled kernels are benchmarked against. All functions operate on stacks
of planes shaped ``(n, H, W)`` in float64 and return new arrays.
"""
import numpy as np

BORDER_MODES = {"replicate": "edge", "zero": "constant"}


def _pad(x, pads, border):
    return np.pad(x, pads, mode=BORDER_MODES[border])


def correlate_axis(x, taps, anchor, axis, border="replicate"):
    """1D correlation of every plane along ``axis`` (1 = rows, 2 = cols)."""
    n = taps.shape[0]
    before, after = anchor, n - 1 - anchor
    pads = [(0, 0)] * 3
    pads[axis] = (before, after)
    xp = _pad(x, pads, border)
    length = x.shape[axis]
    out = np.zeros_like(x)
    for j in range(n):
        sl = [slice(None)] * 3
        sl[axis] = slice(j, j + length)
        out += taps[j] * xp[tuple(sl)]
    return out


def correlate2d(x, kernel, anchor_r, anchor_c, border="replicate"):
    kh, kw = kernel.shape
    xp = _pad(x, ((0, 0), (anchor_r, kh - 1 - anchor_r), (anchor_c, kw - 1 - anchor_c)), border)
    h, w = x.shape[1:]
    out = np.zeros_like(x)
    for i in range(kh):
        for j in range(kw):
            t = kernel[i, j]
            if t != 0.0:
                out += t * xp[:, i:i + h, j:j + w]
    return out


def im2col(x, k, out):
    """Fill ``out`` (b, ho, wo, k, k, c) with the k x k patches of channels-last ``x``."""
    ho, wo = out.shape[1:3]
    for i in range(k):
        for j in range(k):
            out[:, :, :, i, j, :] = x[:, i:i + ho, j:j + wo, :]
    return out


def col2im(dcols, k, dx):
    """Accumulate patch gradients (b, ho, wo, k, k, c) into ``dx`` (b, h, w, c)."""
    ho, wo = dcols.shape[1:3]
    for i in range(k):
        for j in range(k):
            dx[:, i:i + ho, j:j + wo, :] += dcols[:, :, :, i, j, :]
    return dx
