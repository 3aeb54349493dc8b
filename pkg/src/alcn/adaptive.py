"""Adaptive local contrast normalization.

A window is normalized by convolving it with a weighted sum of fixed
Gaussian kernels, the weights being predicted from the window by a CNN.
Whole images use per-pixel weight planes: the image is multiplied by each
plane and the product is smoothed by the matching kernel, so only one
convolution per bank kernel is needed regardless of image size.
"""
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .filters import convolve_separable, gaussian_kernel
from .image import Window, as_image, lab_to_rgb, rgb_to_lab
from .nn import Activation, Conv2D, Dense, MaxPool2D, Network


@dataclass
class KernelBank:
    sigmas: tuple
    kernels: tuple

    def __len__(self):
        return len(self.sigmas)

    @property
    def max_radius(self):
        return max(k.size for k in self.kernels) // 2


def default_bank(n=10):
    """Gaussians with sigma_i = i / 2 for i = 1..n."""
    return make_bank([i / 2 for i in range(1, n + 1)])


def make_bank(sigmas):
    sigmas = tuple(float(s) for s in sigmas)
    return KernelBank(sigmas, tuple(gaussian_kernel(s) for s in sigmas))


def bank_responses(images, bank, border="replicate"):
    """Smooth an image ``(H, W)`` or stack ``(n, H, W)`` with every bank kernel.

    Returns ``(N, H, W)`` or ``(n, N, H, W)``.
    """
    x = np.asarray(images, dtype=np.float64)
    axis = 0 if x.ndim == 2 else 1
    return np.stack([convolve_separable(x, s, border) for s in bank.sigmas], axis=axis)


def _check_weights(w, bank):
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (len(bank),):
        raise ValueError(f"weight vector has shape {w.shape}, bank has {len(bank)} kernels")
    if not np.all(np.isfinite(w)):
        raise ValueError("weight vector contains non-finite values")
    return w


def alcn_window(win, w, bank=None, border="replicate"):
    """Convolve a window with ``sum_i w_i G_i``."""
    bank = bank or default_bank()
    w = _check_weights(w, bank)
    pixels = win.pixels if isinstance(win, Window) else as_image(win)
    return np.tensordot(w, bank_responses(pixels, bank, border), axes=1)


def effective_width(w, sigmas):
    """Weight-averaged sigma over the positive components of ``w`` (0 if none)."""
    w = np.asarray(w, dtype=np.float64)
    sig = np.asarray(sigmas, dtype=np.float64)
    pos = np.clip(w, 0.0, None)
    total = pos.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, (pos * sig).sum(axis=-1) / total, 0.0)


def _window_size(normalizer, default=48):
    if isinstance(normalizer, Network):
        return normalizer.input_shape[-1]
    return default


def predict_weights(normalizer, win):
    """Run the normalizer on one window (its pixels in [0, 1])."""
    pixels = win.pixels if isinstance(win, Window) else np.asarray(win, dtype=np.float64)
    size = _window_size(normalizer, pixels.shape[-1])
    if pixels.shape != (size, size):
        raise ValueError(f"normalizer expects {size}x{size} windows, got {pixels.shape}")
    return np.asarray(normalizer(pixels[None, None]), dtype=np.float64)[0]


def _conv_prefix(net):
    """Index of the first dense layer and the total pooling stride before it,
    or None when the layers before it are not all translation-equivariant."""
    stride = 1
    for i, layer in enumerate(net.layers):
        if isinstance(layer, Dense):
            return i, stride
        if isinstance(layer, MaxPool2D):
            stride *= layer.size
        elif not isinstance(layer, (Conv2D, Activation)):
            return None
    return None


def _grid_padded(img, rows, cols, size):
    half = size // 2
    h, w = img.shape
    bottom = max(int(rows.max()) + size - half - h, 0)
    right = max(int(cols.max()) + size - half - w, 0)
    return np.pad(img, ((half, bottom), (half, right)), mode="edge")


def _predict_windows(normalizer, padded, rows, cols, size, chunk=256):
    out = []
    centers = [(r, c) for r in rows for c in cols]
    for i in range(0, len(centers), chunk):
        batch = np.stack([padded[r:r + size, c:c + size] for r, c in centers[i:i + chunk]])
        out.append(np.asarray(normalizer(batch[:, None]), dtype=np.float64))
    return np.concatenate(out).reshape(len(rows), len(cols), -1)


def _predict_shared(net, padded, rows, cols, size, prefix, chunk=1024):
    # conv/pool features are computed once per pooling phase and sliced per window
    first_dense, T = prefix
    feat_shape = (1, size, size)
    for layer in net.layers[:first_dense]:
        feat_shape = layer.out_shape(feat_shape)
    _, fh, fw = feat_shape
    out = np.empty((len(rows), len(cols), net.output_shape[-1]))
    for pr in np.unique(rows % T):
        ri = np.nonzero(rows % T == pr)[0]
        R = rows[ri]
        for pc in np.unique(cols % T):
            ci = np.nonzero(cols % T == pc)[0]
            C = cols[ci]
            sub = padded[R.min():R.max() + size, C.min():C.max() + size]
            feats = net.forward_layers(sub[None, :, :, None], 0, first_dense)[0]   # h w c
            views = sliding_window_view(feats, (fh, fw), axis=(0, 1))          # h' w' c fh fw
            fr, fc = (R - R.min()) // T, (C - C.min()) // T
            gathered = views[fr][:, fc]                                         # nR nC c fh fw
            x = gathered.transpose(0, 1, 3, 4, 2).reshape(len(R) * len(C), -1)
            pred = np.concatenate([net.forward_layers(x[i:i + chunk], first_dense, None)
                                   for i in range(0, len(x), chunk)])
            out[np.ix_(ri, ci)] = pred.reshape(len(R), len(C), -1)
    return out


def grid_centers(n, stride):
    """Prediction centers for blocks of ``stride`` pixels along an axis of length ``n``."""
    return np.arange(math.ceil(n / stride)) * stride + (stride - 1) // 2


def prediction_image(img):
    """Image as seen by the normalizer: left alone inside [0, 1], otherwise
    rescaled by its global min/max."""
    lo, hi = float(img.min()), float(img.max())
    if lo >= 0.0 and hi <= 1.0:
        return img
    if hi - lo < 1e-12:
        return np.zeros_like(img)
    return (img - lo) / (hi - lo)


def weight_maps(img, normalizer, stride=8, shared=True, window=48):
    """Per-pixel weight planes ``(N, H, W)``: the normalizer is evaluated at
    block centers spaced ``stride`` apart and its output fills each block."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    img = as_image(img)
    h, w = img.shape
    size = _window_size(normalizer, window)
    rows, cols = grid_centers(h, stride), grid_centers(w, stride)
    padded = _grid_padded(prediction_image(img), rows, cols, size)
    prefix = _conv_prefix(normalizer) if shared and isinstance(normalizer, Network) else None
    if prefix is not None:
        grid = _predict_shared(normalizer, padded, rows, cols, size, prefix)
    else:
        grid = _predict_windows(normalizer, padded, rows, cols, size)
    full = np.repeat(np.repeat(grid, stride, axis=0)[:h], stride, axis=1)[:, :w]
    return np.ascontiguousarray(full.transpose(2, 0, 1))


def apply_weight_maps(img, maps, bank, border="replicate"):
    """sum_k G_k * (F_k o I): one convolution per bank kernel."""
    img = as_image(img)
    if maps.shape != (len(bank),) + img.shape:
        raise ValueError(f"weight maps {maps.shape} do not match bank {len(bank)} and image {img.shape}")
    out = np.zeros_like(img)
    for k, sigma in enumerate(bank.sigmas):
        out += convolve_separable(maps[k] * img, sigma, border)
    return out


def alcn_image(img, normalizer, bank=None, stride=8, border="replicate", shared=True, return_maps=False):
    bank = bank or default_bank()
    maps = weight_maps(img, normalizer, stride, shared)
    out = apply_weight_maps(img, maps, bank, border)
    return (out, maps) if return_maps else out


def alcn_lab(L, ab, normalizer, bank=None, stride=8):
    """Normalize the lightness plane; chroma planes are returned untouched."""
    L = as_image(L)
    out = alcn_image(L, normalizer, bank, stride)
    lo, hi = out.min(), out.max()
    if hi - lo < 1e-12:
        return L.copy(), ab
    L_lo, L_hi = L.min(), L.max()
    return L_lo + (out - lo) / (hi - lo) * (L_hi - L_lo), ab


def alcn_color(c, normalizer, bank=None, stride=8):
    L, ab = rgb_to_lab(c)
    L_out, ab_out = alcn_lab(L, ab, normalizer, bank, stride)
    return lab_to_rgb(L_out, ab_out)
