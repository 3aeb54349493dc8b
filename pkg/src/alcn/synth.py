"""Synthetic training images under random illumination changes.

A foreground object is rescaled, pasted onto a random background, and the
whole composite receives a random gain and bias, additive Gaussian noise and
clipping to [0, 1]. Every sample draws from its own generator seeded by
``(seed, index)``, so corpora are reproducible and order independent.
"""
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .image import as_image, load_image


@dataclass
class AugmentParams:
    A: float = 0.5          # gain a drawn from [1-A, 1+A]
    B: float = 0.4          # bias b drawn from [-B, B], on the [0, 1] scale
    S: float = 0.1          # scale s drawn from [1-S, 1+S]
    noise_sigma: float = 0.02
    modulate_noise: bool = True
    seed: int = 0

    def __post_init__(self):
        if min(self.A, self.B, self.S, self.noise_sigma) < 0:
            raise ValueError("augmentation ranges must be non-negative")


@dataclass
class ForegroundAsset:
    image: np.ndarray
    mask: np.ndarray
    name: str = "object"

    def __post_init__(self):
        self.image = as_image(self.image)
        self.mask = np.asarray(self.mask) > 0
        if self.mask.shape != self.image.shape:
            raise ValueError("mask and image dimensions differ")


@dataclass
class UniformBackground:
    """Background of a single random level drawn from [low, high]."""
    low: float = 0.0
    high: float = 1.0


@dataclass
class Dataset:
    patches: np.ndarray              # (n, size, size) uint8
    labels: np.ndarray               # (n,) uint8, 0 = background
    label_names: list = field(default_factory=list)

    def __len__(self):
        return len(self.labels)

    def images(self):
        return self.patches.astype(np.float64) / 255.0

    def subset(self, idx):
        return Dataset(self.patches[idx], self.labels[idx], list(self.label_names))


def draw_params(p, rng):
    a = rng.uniform(1 - p.A, 1 + p.A)
    b = rng.uniform(-p.B, p.B)
    s = rng.uniform(1 - p.S, 1 + p.S)
    return a, b, s


def scale_asset(asset, s):
    if s == 1.0:
        return asset.image, asset.mask
    img = np.clip(ndimage.zoom(asset.image, s, order=1), 0.0, 1.0)
    mask = ndimage.zoom(asset.mask.astype(np.float64), s, order=0) > 0.5
    return img, mask


def background(pool, shape, rng):
    item = pool[rng.integers(len(pool))]
    if isinstance(item, UniformBackground):
        return np.full(shape, rng.uniform(item.low, item.high))
    item = np.asarray(item, dtype=np.float64)
    h, w = shape
    if item.shape[0] < h or item.shape[1] < w:
        raise ValueError(f"background {item.shape} smaller than the {h}x{w} canvas")
    r = rng.integers(item.shape[0] - h + 1)
    c = rng.integers(item.shape[1] - w + 1)
    return item[r:r + h, c:c + w].copy()


def paste(canvas, img, mask, top, left):
    """Composite ``img`` through ``mask`` with its top-left at (top, left), cropping to the canvas."""
    h, w = canvas.shape
    r0, c0 = max(top, 0), max(left, 0)
    r1, c1 = min(top + img.shape[0], h), min(left + img.shape[1], w)
    if r0 >= r1 or c0 >= c1:
        return canvas
    src = (slice(r0 - top, r1 - top), slice(c0 - left, c1 - left))
    m = mask[src]
    canvas[r0:r1, c0:c1][m] = img[src][m]
    return canvas


def relight(x, a, b, p, rng):
    """a*x + b, brightness-modulated Gaussian noise, clip to [0, 1]."""
    interm = a * x + b
    if p.noise_sigma > 0:
        sigma = p.noise_sigma
        if p.modulate_noise:
            sigma = sigma * (0.5 + np.clip(interm, 0.0, 1.0))
        interm = interm + sigma * rng.standard_normal(x.shape)
    return np.clip(interm, 0.0, 1.0)


def generate_sample(asset, backgrounds, p, rng, positive=True, label=1, canvas=48):
    """One relit ``canvas``-sided sample and its label (0 for background-only draws)."""
    if not backgrounds:
        raise ValueError("background pool is empty")
    a, b, s = draw_params(p, rng)
    x = background(backgrounds, (canvas, canvas), rng)
    if positive:
        img, mask = scale_asset(asset, s)
        top = (canvas - img.shape[0]) // 2
        left = (canvas - img.shape[1]) // 2
        paste(x, img, mask, top, left)
    return relight(x, a, b, p, rng), (label if positive else 0)


def sample_rng(seed, index):
    return np.random.default_rng([int(seed), int(index)])


def generate_corpus(assets, backgrounds, count, positive_fraction=0.5, p=None, seed=0, canvas=48):
    """Balanced corpus: ``round(count * positive_fraction)`` positives spread
    evenly over the assets, the rest background-only."""
    if count < 1:
        raise ValueError("count must be >= 1")
    p = p or AugmentParams(seed=seed)
    n_pos = int(round(count * positive_fraction))
    labels = np.zeros(count, dtype=np.uint8)
    labels[:n_pos] = 1 + np.arange(n_pos) % len(assets)
    labels = np.random.default_rng([int(seed), 2**31]).permutation(labels)
    patches = np.empty((count, canvas, canvas), dtype=np.uint8)
    for i, y in enumerate(labels):
        rng = sample_rng(seed, i)
        asset = assets[max(int(y) - 1, 0)]
        img, _ = generate_sample(asset, backgrounds, p, rng, positive=y > 0, label=int(y), canvas=canvas)
        patches[i] = np.rint(img * 255.0).astype(np.uint8)
    names = ["background"] + [a.name for a in assets]
    return Dataset(patches, labels, names)


# ------------------------------------------------------------ file format

DATASET_MAGIC = b"ALCNSYN1"


def dataset_bytes(ds):
    n, size = ds.patches.shape[0], ds.patches.shape[1]
    header = (f"{DATASET_MAGIC.decode()}\ncount {n}\npatch {size}\n"
              f"labels {','.join(f'{i}={name}' for i, name in enumerate(ds.label_names))}\nend\n")
    return header.encode() + ds.patches.astype(np.uint8).tobytes() + ds.labels.astype(np.uint8).tobytes()


def save_dataset(ds, path):
    Path(path).write_bytes(dataset_bytes(ds))


def load_dataset(path):
    buf = io.BytesIO(Path(path).read_bytes())
    if buf.readline().rstrip(b"\n") != DATASET_MAGIC:
        raise ValueError(f"{path}: not an {DATASET_MAGIC.decode()} dataset")
    try:
        n = int(buf.readline().split()[1])
        size = int(buf.readline().split()[1])
        label_line = buf.readline().decode().rstrip("\n")
        names = [item.split("=", 1)[1] for item in label_line.split(" ", 1)[1].split(",")] \
            if " " in label_line else []
        if buf.readline().strip() != b"end":
            raise ValueError("missing end of header")
    except (IndexError, ValueError) as exc:
        raise ValueError(f"{path}: malformed dataset header ({exc})") from None
    body = buf.read()
    if len(body) != n * size * size + n:
        raise ValueError(f"{path}: payload size {len(body)} does not match {n} patches of {size}x{size}")
    patches = np.frombuffer(body[: n * size * size], dtype=np.uint8).reshape(n, size, size).copy()
    labels = np.frombuffer(body[n * size * size:], dtype=np.uint8).copy()
    return Dataset(patches, labels, names)


def load_backgrounds(directory):
    """Every readable grayscale PGM/PNG in a directory (color files are converted to gray)."""
    out = []
    for f in sorted(Path(directory).iterdir()):
        if f.suffix.lower() not in (".pgm", ".png"):
            continue
        img = load_image(f)
        if img.ndim == 3:
            img = img.astype(np.float64) @ np.array([0.299, 0.587, 0.114]) / 255.0
        out.append(img)
    return out


def load_phos_directory(directory):
    """Images grouped per object from a Phos-style tree ``<root>/<object>/<image>``.

    Returns ``{object_name: [image, ...]}`` with grayscale float images.
    """
    groups = {}
    for sub in sorted(p for p in Path(directory).iterdir() if p.is_dir()):
        imgs = load_backgrounds(sub)
        if imgs:
            groups[sub.name] = imgs
    return groups


# ------------------------------------------------------------ test scenes

@dataclass
class Scene:
    image: np.ndarray
    boxes: list          # (x, y, w, h, label) of placed objects
    gain: float
    bias: float


def generate_scene(assets, backgrounds, size, rng, p, gain_ranges, bias_range=(-0.1, 0.1),
                   n_objects=1, box=48):
    """A ``size``-sided test image holding ``n_objects`` objects at random
    positions, relit with a gain drawn from ``gain_ranges`` (a list of
    intervals) and a bias from ``bias_range``."""
    x = background(backgrounds, (size, size), rng)
    boxes = []
    for _ in range(n_objects):
        k = int(rng.integers(len(assets)))
        img, mask = scale_asset(assets[k], 1.0)
        top = int(rng.integers(0, size - box + 1))
        left = int(rng.integers(0, size - box + 1))
        paste(x, img, mask, top + (box - img.shape[0]) // 2, left + (box - img.shape[1]) // 2)
        boxes.append((left, top, box, box, k + 1))
    lo, hi = gain_ranges[int(rng.integers(len(gain_ranges)))]
    a = rng.uniform(lo, hi)
    b = rng.uniform(*bias_range)
    return Scene(relight(x, a, b, p, rng), boxes, a, b)
