"""Raster helpers: file I/O, CIE Lab conversion, window extraction, resampling.

Grayscale images are float64 arrays ``(H, W)`` with nominal range [0, 1].
Color images are uint8 arrays ``(H, W, 3)`` in RGB order.
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .filters import BORDERS


class ImageIOError(Exception):
    """Base class for image loading and saving failures."""


class ImageReadError(ImageIOError):
    """The file is missing or cannot be read."""


class ImageFormatError(ImageIOError):
    """The file contents are not a supported image."""


@dataclass
class Window:
    center: tuple
    size: int
    pixels: np.ndarray


def as_image(a):
    img = np.asarray(a, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2D grayscale image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


# --------------------------------------------------------------------- I/O

def _pgm_tokens(data, count, pos):
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos


def _parse_pgm(data):
    magic = data[:2]
    try:
        (w, h, maxval), pos = _pgm_tokens(data, 3, 2)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise ImageFormatError(f"bad PGM header: {exc}") from None
    if w <= 0 or h <= 0 or not 0 < maxval <= 255:
        raise ImageFormatError(f"unsupported PGM geometry {w}x{h} maxval {maxval}")
    if magic == b"P5":
        pixels = np.frombuffer(data, dtype=np.uint8, count=-1, offset=pos + 1)
        if pixels.size < w * h:
            raise ImageFormatError("truncated PGM payload")
        vals = pixels[: w * h].astype(np.float64)
    else:
        try:
            vals = np.array([int(t) for t in data[pos:].split()[: w * h]], dtype=np.float64)
        except ValueError:
            raise ImageFormatError("non-integer sample in P2 payload") from None
        if vals.size < w * h:
            raise ImageFormatError("truncated PGM payload")
    return vals.reshape(h, w) / maxval


def load_image(path):
    """Read PGM (P2/P5) or PNG. Gray files give a float image in [0, 1],
    color PNGs give a uint8 RGB array."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ImageReadError(f"cannot read {path}: {exc}") from None
    if data[:2] in (b"P2", b"P5"):
        return _parse_pgm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        from io import BytesIO
        from PIL import Image as PILImage

        try:
            im = PILImage.open(BytesIO(data))
            im.load()
        except Exception as exc:
            raise ImageFormatError(f"bad PNG {path}: {exc}") from None
        if im.mode in ("L", "LA", "1"):
            return np.asarray(im.convert("L"), dtype=np.float64) / 255.0
        if im.mode in ("RGB", "RGBA", "P"):
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
        raise ImageFormatError(f"unsupported PNG mode {im.mode}")
    raise ImageFormatError(f"{path}: not a PGM or PNG file")


def to_uint8(img):
    return np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def save_image(path, img):
    """Write a gray float image (clipped to [0,1]) or a uint8 RGB array.
    The suffix selects the format: ``.pgm`` (P5) or ``.png``."""
    path = Path(path)
    arr = np.asarray(img)
    if arr.ndim == 3:
        if arr.shape[2] != 3:
            raise ValueError("color images must have 3 channels")
        data = arr.astype(np.uint8)
        if path.suffix.lower() != ".png":
            raise ImageFormatError("color images can only be written as PNG")
    else:
        data = to_uint8(arr)
    if path.suffix.lower() == ".pgm":
        h, w = data.shape
        path.write_bytes(b"P5\n%d %d\n255\n" % (w, h) + data.tobytes())
    elif path.suffix.lower() == ".png":
        from PIL import Image as PILImage

        PILImage.fromarray(data).save(path)
    else:
        raise ImageFormatError(f"unsupported output format {path.suffix!r}")


# --------------------------------------------------------------------- Lab

# sRGB primaries, D65 white
_RGB2XYZ = np.array([[0.4124564, 0.3575761, 0.1804375],
                     [0.2126729, 0.7151522, 0.0721750],
                     [0.0193339, 0.1191920, 0.9503041]])
_XYZ2RGB = np.linalg.inv(_RGB2XYZ)
_WHITE = _RGB2XYZ.sum(axis=1)
_EPS = 216.0 / 24389.0
_KAPPA = 24389.0 / 27.0


def _srgb_to_linear(c):
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _linear_to_srgb(c):
    c = np.clip(c, 0.0, None)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * c ** (1.0 / 2.4) - 0.055)


def rgb_to_lab(c):
    """Return lightness scaled to [0, 1] and the (H, W, 2) a*b* planes."""
    rgb = np.asarray(c, dtype=np.float64) / 255.0
    xyz = _srgb_to_linear(rgb) @ _RGB2XYZ.T / _WHITE
    f = np.where(xyz > _EPS, np.cbrt(xyz), (_KAPPA * xyz + 16.0) / 116.0)
    L = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.clip(L / 100.0, 0.0, 1.0), np.stack([a, b], axis=-1)


def lab_to_rgb(L, ab):
    """Inverse of :func:`rgb_to_lab`; out-of-gamut values are clipped to [0, 255]."""
    L = np.asarray(L, dtype=np.float64) * 100.0
    ab = np.asarray(ab, dtype=np.float64)
    if ab.shape[:2] != L.shape or ab.shape[-1] != 2:
        raise ValueError(f"lightness {L.shape} and chroma {ab.shape} planes disagree")
    fy = (L + 16.0) / 116.0
    fx = fy + ab[..., 0] / 500.0
    fz = fy - ab[..., 1] / 200.0
    f = np.stack([fx, fy, fz], axis=-1)
    xyz = np.where(f ** 3 > _EPS, f ** 3, (116.0 * f - 16.0) / _KAPPA)
    xyz[..., 1] = np.where(L > _KAPPA * _EPS, fy ** 3, L / _KAPPA)
    rgb = _linear_to_srgb((xyz * _WHITE) @ _XYZ2RGB.T)
    return np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)


# ----------------------------------------------------------------- windows

def pad_image(img, before, after, border="replicate"):
    if border not in BORDERS:
        raise ValueError(f"unknown border policy {border!r}")
    mode = "edge" if border == "replicate" else "constant"
    return np.pad(img, ((before, after), (before, after)), mode=mode)


def extract_window(img, center, size, border="replicate"):
    """Copy the ``size``-sided window whose pixel ``size // 2`` sits at ``center``.

    The image is padded by the window half-size, so the center itself must lie
    inside the image.
    """
    img = np.asarray(img, dtype=np.float64)
    if size < 1:
        raise ValueError("window size must be >= 1")
    r, c = center
    h, w = img.shape
    if not (0 <= r < h and 0 <= c < w):
        raise ValueError(f"window center {center} outside the {h}x{w} image support")
    half = size // 2
    r0, c0 = r - half, c - half
    if r0 >= 0 and c0 >= 0 and r0 + size <= h and c0 + size <= w:
        pix = img[r0:r0 + size, c0:c0 + size].copy()
    else:
        padded = pad_image(img, half, size - 1 - half, border)
        pix = padded[r:r + size, c:c + size].copy()
    return Window(center=(r, c), size=size, pixels=pix)


def _area_matrix(n, factor):
    m = int(np.ceil(round(n / factor, 9)))
    edges = np.minimum(np.arange(m + 1) * factor, n)
    lo, hi = edges[:-1, None], edges[1:, None]
    px = np.arange(n)[None, :]
    overlap = np.clip(np.minimum(hi, px + 1) - np.maximum(lo, px), 0.0, None)
    return overlap / overlap.sum(axis=1, keepdims=True)


def downscale(img, factor):
    """Area-averaging downscale to ceil(dims / factor)."""
    if factor < 1:
        raise ValueError(f"downscale factor must be >= 1, got {factor}")
    img = np.asarray(img, dtype=np.float64)
    if factor == 1:
        return img.copy()
    rows = _area_matrix(img.shape[0], float(factor))
    cols = _area_matrix(img.shape[1], float(factor))
    return rows @ img @ cols.T
