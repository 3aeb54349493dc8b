"""Procedural objects and backgrounds for desk-scale experiments."""
import numpy as np

from .synth import ForegroundAsset, UniformBackground


def _grid(size):
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[:size, :size] - c
    return yy, xx


def ring_object(size=40):
    """Disk textured with concentric rings."""
    yy, xx = _grid(size)
    r = np.hypot(yy, xx)
    img = 0.55 + 0.3 * np.cos(2 * np.pi * r / 7.0)
    return ForegroundAsset(img, r <= size / 2 - 1, "rings")


def cross_object(size=40):
    """Square with a bright cross and diagonal stripes."""
    yy, xx = _grid(size)
    img = 0.45 + 0.2 * np.sign(np.sin(2 * np.pi * (xx + yy) / 9.0))
    arm = size / 7
    img[(np.abs(xx) < arm) | (np.abs(yy) < arm)] = 0.85
    mask = (np.abs(xx) < size / 2 - 2) & (np.abs(yy) < size / 2 - 2)
    return ForegroundAsset(img, mask, "cross")


def toy_assets(size=40):
    return [ring_object(size), cross_object(size)]


def pink_noise(shape, rng, exponent=1.0):
    """Random texture with a 1/f^exponent amplitude spectrum, scaled to [0.1, 0.9]."""
    h, w = shape
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.rfftfreq(w)[None, :]
    f = np.hypot(fy, fx)
    f[0, 0] = 1.0
    spec = (rng.standard_normal(f.shape) + 1j * rng.standard_normal(f.shape)) / f ** exponent
    spec[0, 0] = 0.0
    tex = np.fft.irfft2(spec, s=shape)
    tex = (tex - tex.min()) / (tex.max() - tex.min())
    return 0.1 + 0.8 * tex


def toy_backgrounds(rng, count=8, size=160, uniform=True):
    pool = [pink_noise((size, size), rng) for _ in range(count)]
    if uniform:
        pool.append(UniformBackground(0.1, 0.9))
    return pool
