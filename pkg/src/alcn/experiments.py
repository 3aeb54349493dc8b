"""Desk-scale experiments on the synthetic toy corpus.

* :func:`adaptivity_study` -- does a jointly trained normalizer choose wider
  kernels for darkened windows than for brightened ones?
* :func:`dog_split_study` -- DoG parameters learned separately on the dark and
  bright halves of a corpus.
* :func:`detection_study` -- detection AUC on held-out scenes relit outside
  the training range, for raw, fixed-DoG and ALCN front ends.

The protocol constants below are fixed choices, shared by the acceptance
suite and the README.
"""
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import synth, toy, train
from .adaptive import default_bank, effective_width
from .classic import DoGParams
from .evaluate import BoundingBox, pr_auc, sliding_detect
from .filters import convolve_separable
from .train import TrainConfig

log = logging.getLogger(__name__)

TRAIN_COUNT = 20000
TRAIN_SEED = 1
TEST_SEED = 99
DARK_GAIN, BRIGHT_GAIN = 0.3, 1.3
# test scenes: gains outside the training range [0.5, 1.5], small bias
SCENE_GAINS = [(0.2, 0.45), (1.6, 2.0)]
SCENE_BIAS = (-0.05, 0.05)
SCENE_SIZE = 128
SCENE_COUNT = 40
BOX_SIZE = 48
DETECT_STRIDE = 4
DETECT_THRESHOLD = 0.05
IOU_THRESHOLD = 0.8


@dataclass
class ToyWorld:
    assets: list
    backgrounds: list
    train: synth.Dataset


def toy_world(count=TRAIN_COUNT, seed=TRAIN_SEED, p=None):
    """Two toy objects, pink-noise and uniform backgrounds, and a training corpus."""
    assets = toy.toy_assets()
    backgrounds = toy.toy_backgrounds(np.random.default_rng(0))
    ds = synth.generate_corpus(assets, backgrounds, count, 0.5, p or synth.AugmentParams(seed=seed), seed)
    return ToyWorld(assets, backgrounds, ds)


# ------------------------------------------------------------ adaptivity

def gain_pairs(patches, dark_gain=DARK_GAIN, bright_gain=BRIGHT_GAIN):
    x = np.asarray(patches, dtype=np.float64)
    return np.clip(dark_gain * x, 0.0, 1.0), np.clip(bright_gain * x, 0.0, 1.0)


def adaptivity_study(normalizer, patches, bank=None, dark_gain=DARK_GAIN, bright_gain=BRIGHT_GAIN):
    """Compare effective kernel widths predicted for darkened vs brightened copies."""
    bank = bank or default_bank()
    dark, bright = gain_pairs(patches, dark_gain, bright_gain)
    wd = normalizer(dark[:, None])
    wb = normalizer(bright[:, None])
    ed, eb = effective_width(wd, bank.sigmas), effective_width(wb, bank.sigmas)
    return {"fraction_dark_wider": float(np.mean(ed > eb)),
            "mean_width_dark": float(ed.mean()), "mean_width_bright": float(eb.mean()),
            "pairs": len(ed)}


def dog_split_study(dataset, cfg=None, init=None, max_per_side=None, seed=0):
    """Learn DoG parameters on the dark and the bright split of ``dataset``.

    Both sides are subsampled to the same size so that they get the same
    number of optimization steps.
    """
    cfg = cfg or TrainConfig(epochs=3)
    init = init or DoGParams()
    dark, bright = train.split_by_brightness(dataset)
    n = min(len(dark), len(bright))
    if max_per_side:
        n = min(n, max_per_side)
    rng = np.random.default_rng(seed)
    out = {}
    for name, part in (("dark", dark), ("bright", bright)):
        sub = part.subset(np.sort(rng.choice(len(part), n, replace=False)))
        res = train.dog_param_train(sub, cfg, init, num_classes=len(dataset.label_names))
        out[name] = res.omega
        log.info("%s split (%d samples): %s", name, n, res.omega)
    out["per_side"] = n
    return out


# ------------------------------------------------------------ detection

def held_out_scenes(world, count=SCENE_COUNT, seed=TEST_SEED, gains=SCENE_GAINS, bias=SCENE_BIAS):
    """Scenes with one object each, relit with gains outside the training range."""
    rng = np.random.default_rng([seed, 1])
    backgrounds = toy.toy_backgrounds(rng, count=4, size=SCENE_SIZE, uniform=False)
    p = synth.AugmentParams()
    return [synth.generate_scene(world.assets, backgrounds, SCENE_SIZE, rng, p, gains, bias, 1, BOX_SIZE)
            for _ in range(count)]


def scene_auc(scenes, detector, normalizer=None, iou_threshold=IOU_THRESHOLD):
    dets, truth = {}, {}
    for i, sc in enumerate(scenes):
        dets[i] = sliding_detect(sc.image, detector, normalizer, stride=DETECT_STRIDE, box_size=BOX_SIZE,
                                 threshold=DETECT_THRESHOLD)
        truth[i] = [BoundingBox(x, y, w, h, None, label) for x, y, w, h, label in sc.boxes]
    return pr_auc(dets, truth, iou_threshold).auc


def dog_preprocess(p):
    def run(x):
        return p.k2 * convolve_separable(x, p.sigma2) - p.k1 * convolve_separable(x, p.sigma1)
    return run


@dataclass
class DetectionReport:
    auc: dict = field(default_factory=dict)
    seconds: dict = field(default_factory=dict)
    learned_dog: DoGParams = None


def detection_study(world, joint, cfg=None, scenes=None, dog_candidates=None):
    """AUC of detectors trained on raw, fixed-DoG and ALCN-normalized patches.

    ``joint`` is a finished :func:`train.joint_train` result. The fixed-DoG
    candidates default to the standard DoG and the DoG learned on the
    training corpus.
    """
    cfg = cfg or TrainConfig(epochs=3)
    scenes = scenes or held_out_scenes(world)
    report = DetectionReport()
    num_classes = len(world.train.label_names)

    t0 = time.perf_counter()
    raw = train.train_detector(world.train, None, cfg, num_classes)
    report.seconds["raw"] = time.perf_counter() - t0
    report.auc["raw"] = scene_auc(scenes, raw.detector)

    if dog_candidates is None:
        t0 = time.perf_counter()
        learned = train.dog_param_train(world.train, cfg, DoGParams(), num_classes).omega
        report.seconds["dog_fit"] = time.perf_counter() - t0
        report.learned_dog = learned
        dog_candidates = {"dog_default": DoGParams(), "dog_learned": learned}
    for name, p in dog_candidates.items():
        t0 = time.perf_counter()
        res = train.train_detector(world.train, dog_preprocess(p), cfg, num_classes)
        report.seconds[name] = time.perf_counter() - t0
        report.auc[name] = scene_auc(scenes, res.detector, dog_preprocess(p))

    report.auc["alcn"] = scene_auc(scenes, joint.detector, joint.normalizer)
    return report
