"""Classical illumination normalization baselines.

Every method takes a float image (nominal range [0, 1]) and returns a new
float image. Gaussian smoothing uses the replicate border.
"""
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .filters import convolve, convolve_separable
from .image import as_image


@dataclass
class DoGParams:
    k1: float = 1.0
    k2: float = 1.0
    sigma1: float = 1.0
    sigma2: float = 2.0

    def __post_init__(self):
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ValueError("DoG sigmas must be positive")


@dataclass
class LrnParams:
    # defaults from the AlexNet LRN layer
    k: float = 2.0
    n: int = 5
    alpha: float = 1e-4
    beta: float = 0.75

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("LRN neighborhood n must be >= 1")


@dataclass
class ClaheParams:
    tile: int = 8          # tiles per image side
    clip_limit: float = 0.01  # per-bin ceiling, as a fraction of tile pixels
    bins: int = 256

    def __post_init__(self):
        if self.tile < 1 or self.clip_limit <= 0 or self.bins < 2:
            raise ValueError("invalid CLAHE parameters")


def normalize_standard(img, eps=1e-6, info=None):
    """Zero mean, unit standard deviation. ``info['eps_floor']`` records
    whether the std floor was used."""
    img = as_image(img)
    # shifting by a pixel value first makes a constant image exactly zero
    shifted = img - img.flat[0]
    std = shifted.std()
    floored = std < eps
    if info is not None:
        info["eps_floor"] = bool(floored)
    return (shifted - shifted.mean()) / max(std, eps)


def dog(img, p, border="replicate", exact_paper_size=False):
    img = as_image(img)
    g2 = convolve_separable(img, p.sigma2, border, exact_paper_size)
    g1 = convolve_separable(img, p.sigma1, border, exact_paper_size)
    return p.k2 * g2 - p.k1 * g1


def slcn(img, sigma_sub=2.0, border="replicate"):
    # I - G*I is unchanged by a constant shift (unit-sum kernel); shifting by a
    # pixel value keeps constant regions exactly zero despite tap rounding
    img = as_image(img)
    shifted = img - img.flat[0]
    return shifted - convolve_separable(shifted, sigma_sub, border)


def dlcn(img, sigma_sub=2.0, sigma_div=2.0, t=1e-4, sqrt_denominator=False, border="replicate"):
    """Divisive LCN. The denominator is the Gaussian-weighted local second
    moment of the SLCN output; ``sqrt_denominator`` uses its square root."""
    sub = slcn(img, sigma_sub, border)
    moment = convolve_separable(sub * sub, sigma_div, border)
    if sqrt_denominator:
        moment = np.sqrt(moment)
    return sub / np.maximum(t, moment)


def lrn(maps, p=None):
    """Cross-map local response normalization of a stack ``(N, H, W)``."""
    p = p or LrnParams()
    x = np.asarray(maps, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    N = x.shape[0]
    sq = x * x
    csum = np.concatenate([np.zeros_like(sq[:1]), np.cumsum(sq, axis=0)])
    out = np.empty_like(x)
    half = p.n // 2
    for i in range(N):
        lo, hi = max(0, i - half), min(N - 1, i + half)
        denom = p.k + p.alpha * (csum[hi + 1] - csum[lo])
        if np.any(denom <= 0):
            raise ValueError("non-positive LRN denominator")
        out[i] = x[i] / denom ** p.beta
    return out


def _quantize(img, levels=256):
    return np.clip(np.rint(img * (levels - 1)), 0, levels - 1).astype(np.int64)


def _equalize_map(counts, levels):
    # floor((max - min) * cdf) on integer counts; exact, no float drift
    cum = np.cumsum(counts)
    return ((levels - 1) * cum) // max(int(cum[-1]), 1)


def hist_eq(img):
    """Global histogram equalization on the 256-level quantized image."""
    q = _quantize(as_image(img))
    counts = np.bincount(q.ravel(), minlength=256)
    return _equalize_map(counts, 256)[q] / 255.0


def _tile_edges(n, tiles):
    return np.linspace(0, n, tiles + 1).round().astype(int)


def clipped_histogram(values, bins, clip_limit):
    """Histogram of a tile with each bin capped at ``clip_limit * n_pixels``."""
    counts = np.bincount(values.ravel(), minlength=bins).astype(np.float64)
    ceiling = clip_limit * values.size
    return np.minimum(counts, ceiling)


def clahe(img, p=None):
    """Tile-wise clipped histogram equalization with bilinear blending of the
    tile mappings between tile centers. Clipped mass is dropped and the
    histogram renormalized."""
    p = p or ClaheParams()
    img = as_image(img)
    h, w = img.shape
    if h < p.tile or w < p.tile:
        raise ValueError(f"image {h}x{w} smaller than the {p.tile}x{p.tile} tile grid")
    q = _quantize(img, p.bins)
    re, ce = _tile_edges(h, p.tile), _tile_edges(w, p.tile)
    lut = np.empty((p.tile, p.tile, p.bins))
    for i in range(p.tile):
        for j in range(p.tile):
            hist = clipped_histogram(q[re[i]:re[i + 1], ce[j]:ce[j + 1]], p.bins, p.clip_limit)
            cdf = np.cumsum(hist) / hist.sum()
            lut[i, j] = np.floor((p.bins - 1) * cdf + 1e-9) / (p.bins - 1)

    def interp_coords(edges, n):
        centers = (edges[:-1] + edges[1:] - 1) / 2.0
        pos = np.arange(n)
        if len(centers) == 1:
            return np.zeros(n, int), np.zeros(n, int), np.zeros(n)
        i1 = np.clip(np.searchsorted(centers, pos, side="right"), 1, len(centers) - 1)
        i0 = i1 - 1
        t = np.clip((pos - centers[i0]) / (centers[i1] - centers[i0]), 0.0, 1.0)
        return i0, i1, t

    r0, r1, tr = interp_coords(re, h)
    c0, c1, tc = interp_coords(ce, w)
    R0, C0 = r0[:, None], c0[None, :]
    R1, C1 = r1[:, None], c1[None, :]
    TR, TC = tr[:, None], tc[None, :]
    v00 = lut[R0, C0, q]
    v01 = lut[R0, C1, q]
    v10 = lut[R1, C0, q]
    v11 = lut[R1, C1, q]
    return (1 - TR) * ((1 - TC) * v00 + TC * v01) + TR * ((1 - TC) * v10 + TC * v11)


def sqi(img, sigma=2.0, eps=1e-4, border="replicate"):
    img = as_image(img)
    return img / np.maximum(eps, convolve_separable(img, sigma, border))


def whitening_filter(patches, eig_floor=1e-8):
    """Whitening convolution filter: the middle column of C^(-1/2), where C is
    the covariance of the flattened m x m patches, reshaped back to m x m."""
    P = np.asarray(patches, dtype=np.float64)
    if P.ndim != 3 or P.shape[1] != P.shape[2]:
        raise ValueError("patches must be an (n, m, m) array")
    n, m, _ = P.shape
    if n < 10 * m * m:
        raise ValueError(f"need at least {10 * m * m} patches for a stable covariance, got {n}")
    X = P.reshape(n, m * m)
    X = X - X.mean(axis=0)
    C = X.T @ X / (n - 1)
    if np.trace(C) <= 1e-12 * m * m:
        raise ValueError("degenerate patch covariance (all patches equal)")
    vals, vecs = np.linalg.eigh(C)
    inv_sqrt = (vecs / np.sqrt(np.maximum(vals, eig_floor))) @ vecs.T
    return inv_sqrt[:, (m * m) // 2].reshape(m, m)


def whitening_matrix(patches, eig_floor=1e-8):
    P = np.asarray(patches, dtype=np.float64)
    X = P.reshape(P.shape[0], -1)
    X = X - X.mean(axis=0)
    vals, vecs = np.linalg.eigh(X.T @ X / (X.shape[0] - 1))
    return (vecs / np.sqrt(np.maximum(vals, eig_floor))) @ vecs.T


def sample_patches(img, m, count, rng):
    img = as_image(img)
    h, w = img.shape
    rs = rng.integers(0, h - m + 1, count)
    cs = rng.integers(0, w - m + 1, count)
    return np.stack([img[r:r + m, c:c + m] for r, c in zip(rs, cs)])


def whiten(img, filt, border="replicate"):
    return convolve(as_image(img), filt, border)


def intrinsic(img, reflectance):
    """Pass-through slot for a reflectance image computed by an external solver."""
    img, refl = as_image(img), as_image(reflectance)
    if refl.shape != img.shape:
        raise ValueError("reflectance image must match the input dimensions")
    return refl.copy()


# ------------------------------------------------------- parameter files

_SECTIONS = {"dog": DoGParams, "lrn": LrnParams, "clahe": ClaheParams}
_ALIASES = {"clahe.clip": "clahe.clip_limit"}


def read_params(path):
    """Parse a flat ``key=value`` file (``dog.k1=1.2``) into a nested dict of floats/ints."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        section, _, name = key.partition(".")
        if not name:
            raise ValueError(f"{path}:{lineno}: key {key!r} lacks a method prefix")
        num = float(value)
        out.setdefault(section, {})[name] = int(num) if num.is_integer() and name in ("n", "tile", "bins") else num
    return out


def write_params(path, section, params):
    lines = [f"{section}.{k}={v!r}" for k, v in asdict(params).items()] if hasattr(params, "__dataclass_fields__") \
        else [f"{section}.{k}={v!r}" for k, v in params.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def params_from(section_values, cls):
    names = {f.name for f in fields(cls)}
    unknown = set(section_values) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**section_values)
