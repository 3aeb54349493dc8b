"""Training loops.

``joint_train`` fits the normalizer and the detector together: the
normalizer predicts bank weights from the 48x48 patch, the weighted Gaussian
bank is applied to the patch, and the detector classifies the central 32x32
crop. Because the normalization is linear in the weights, the loss gradient
with respect to weight ``k`` is the detector's input gradient correlated
with the ``k``-th bank response.

``dog_param_train`` fits the four difference-of-Gaussians parameters with
the detector instead, differentiating through the sampled Gaussian taps.
"""
import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .adaptive import bank_responses, default_bank
from .classic import DoGParams
from .filters import correlate_separable, gaussian_taps_dsigma, kernel_size
from .nn import build_detector, build_normalizer, sgd_step

log = logging.getLogger(__name__)

CROP_OFFSET = 8
DARK_THRESHOLD = 80 / 255


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 128
    lr: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    activation: str = "tanh"
    freeze_normalizer: bool = False
    omega_lr: float = None      # DoG parameter learning rate; defaults to lr
    clip_norm: float = 1.0      # per-network gradient norm ceiling; None/0 disables

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass
class TrainResult:
    normalizer: object
    detector: object
    epoch_losses: list = field(default_factory=list)
    step_losses: list = field(default_factory=list)
    omega: DoGParams = None
    omega_history: list = field(default_factory=list)


def _as_arrays(dataset):
    if hasattr(dataset, "images"):
        return dataset.images(), np.asarray(dataset.labels, dtype=np.int64)
    x, y = dataset
    return np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.int64)


def _crop(x, crop, size):
    return x[..., crop:crop + size, crop:crop + size]


def _batches(n, batch_size, seed, epoch):
    order = np.random.default_rng([int(seed), 7, int(epoch)]).permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def _check_loss(loss, epoch, step):
    if not np.isfinite(loss):
        raise TrainingDivergedError(f"non-finite loss {loss} at epoch {epoch + 1}, step {step}; "
                                    "try a smaller learning rate")


def joint_loss(normalizer, detector, bank, x, y, crop=CROP_OFFSET, weights=None,
               backward=True, train_normalizer=True):
    """Loss of one minibatch through normalizer -> ALCN -> detector.

    ``weights`` replaces the normalizer with a fixed weight vector. Gradients
    are accumulated into both networks when ``backward`` is set.
    """
    size = detector.input_shape[-1]
    resp = _crop(bank_responses(x, bank), crop, size)            # b N h w
    if weights is not None:
        w = np.broadcast_to(np.asarray(weights, dtype=np.float64), (len(x), len(bank)))
    else:
        w = normalizer.forward(x[:, None], cache=backward and train_normalizer)
    z = np.einsum("bn,bnhw->bhw", w, resp)
    probs = detector.forward(z[:, None])
    loss = detector.nll(probs, y)
    if backward:
        dz = detector.backward(None, need_input_grad=weights is None and train_normalizer)
        if weights is None and train_normalizer:
            dw = np.einsum("bhw,bnhw->bn", dz[:, 0], resp)
            normalizer.backward(dw, need_input_grad=False)
    return loss


def joint_train(dataset, bank=None, cfg=None, num_classes=None, normalizer=None, detector=None,
                weights=None, crop=CROP_OFFSET, callback=None):
    """Jointly train a normalizer and a detector on 48x48 patches.

    With ``cfg.freeze_normalizer`` (or a fixed ``weights`` vector) only the
    detector is updated.
    """
    cfg = cfg or TrainConfig()
    bank = bank or default_bank()
    x, y = _as_arrays(dataset)
    num_classes = num_classes or int(y.max()) + 1
    if normalizer is None and weights is None:
        normalizer = build_normalizer(len(bank), cfg.activation, seed=cfg.seed, input_size=x.shape[-1])
    if detector is None:
        detector = build_detector(max(num_classes, 2), cfg.activation, seed=cfg.seed + 1,
                                  input_size=x.shape[-1] - 2 * crop)
    train_norm = weights is None and not cfg.freeze_normalizer
    res = TrainResult(normalizer, detector)
    for epoch in range(cfg.epochs):
        losses = []
        for step, idx in enumerate(_batches(len(x), cfg.batch_size, cfg.seed, epoch)):
            loss = joint_loss(normalizer, detector, bank, x[idx], y[idx], crop, weights,
                              train_normalizer=train_norm)
            _check_loss(loss, epoch, step)
            sgd_step(detector, cfg.lr, cfg.momentum, cfg.clip_norm)
            if train_norm:
                sgd_step(normalizer, cfg.lr, cfg.momentum, cfg.clip_norm)
            losses.append(loss)
        res.step_losses.extend(losses)
        res.epoch_losses.append(float(np.mean(losses)))
        log.info("joint epoch %d loss %.5f", epoch + 1, res.epoch_losses[-1])
        if callback:
            callback(epoch, res)
    return res


def train_detector(dataset, preprocess, cfg=None, num_classes=None, detector=None, crop=CROP_OFFSET):
    """Train a detector alone on ``preprocess(patches)`` cropped to the center.

    ``preprocess`` maps a stack ``(b, 48, 48)`` to a stack of the same shape;
    pass ``None`` for raw intensities.
    """
    cfg = cfg or TrainConfig()
    x, y = _as_arrays(dataset)
    num_classes = num_classes or int(y.max()) + 1
    if detector is None:
        detector = build_detector(max(num_classes, 2), cfg.activation, seed=cfg.seed + 1,
                                  input_size=x.shape[-1] - 2 * crop)
    size = detector.input_shape[-1]
    res = TrainResult(None, detector)
    for epoch in range(cfg.epochs):
        losses = []
        for step, idx in enumerate(_batches(len(x), cfg.batch_size, cfg.seed, epoch)):
            xb = x[idx] if preprocess is None else preprocess(x[idx])
            probs = detector.forward(_crop(xb, crop, size)[:, None])
            loss = detector.nll(probs, y[idx])
            _check_loss(loss, epoch, step)
            detector.backward(None, need_input_grad=False)
            sgd_step(detector, cfg.lr, cfg.momentum, cfg.clip_norm)
            losses.append(loss)
        res.step_losses.extend(losses)
        res.epoch_losses.append(float(np.mean(losses)))
        log.info("detector epoch %d loss %.5f", epoch + 1, res.epoch_losses[-1])
    return res


# ------------------------------------------------------- DoG parameters

def softplus(x):
    return np.log1p(np.exp(-abs(x))) + max(x, 0.0)


def softplus_inv(y):
    return y + np.log(-np.expm1(-y))


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def smooth_with_dsigma(x, sigma, size):
    """``G_sigma * x`` and its derivative with respect to sigma, on a fixed support."""
    g, dg = gaussian_taps_dsigma(sigma, size)
    out = correlate_separable(x, g, g)
    d = correlate_separable(x, dg, g) + correlate_separable(x, g, dg)
    return out, d


class DoGLayer:
    """Differentiable DoG with softplus-parameterized sigmas."""

    def __init__(self, init, support_sigma=None):
        self.theta = np.array([init.k1, init.k2, softplus_inv(init.sigma1), softplus_inv(init.sigma2)])
        s = support_sigma or max(init.sigma1, init.sigma2)
        self.size = kernel_size(s)
        self.grad = np.zeros(4)
        self.velocity = np.zeros(4)

    @property
    def params(self):
        k1, k2, r1, r2 = self.theta
        return DoGParams(float(k1), float(k2), float(softplus(r1)), float(softplus(r2)))

    def forward(self, x):
        p = self.params
        g1, d1 = smooth_with_dsigma(x, p.sigma1, self.size)
        g2, d2 = smooth_with_dsigma(x, p.sigma2, self.size)
        self._cache = (g1, d1, g2, d2, p)
        return p.k2 * g2 - p.k1 * g1

    def backward(self, dout):
        g1, d1, g2, d2, p = self._cache
        r1, r2 = self.theta[2:]
        self.grad += [-np.sum(dout * g1), np.sum(dout * g2),
                      -p.k1 * np.sum(dout * d1) * sigmoid(r1),
                      p.k2 * np.sum(dout * d2) * sigmoid(r2)]

    def step(self, lr, momentum):
        self.velocity = momentum * self.velocity + self.grad
        self.theta = self.theta - lr * self.velocity
        self.grad = np.zeros(4)


def dog_param_train(dataset, cfg=None, init=None, num_classes=None, detector=None,
                    crop=CROP_OFFSET, support_sigma=None):
    """Optimize DoG parameters (k1, k2, sigma1, sigma2) together with a detector.

    The Gaussian support is fixed at the size implied by ``support_sigma``
    (default: the larger initial sigma) so shapes stay static.
    """
    cfg = cfg or TrainConfig()
    init = init or DoGParams()
    x, y = _as_arrays(dataset)
    num_classes = num_classes or int(y.max()) + 1
    if detector is None:
        detector = build_detector(max(num_classes, 2), cfg.activation, seed=cfg.seed + 1,
                                  input_size=x.shape[-1] - 2 * crop)
    size = detector.input_shape[-1]
    layer = DoGLayer(init, support_sigma)
    omega_lr = cfg.lr if cfg.omega_lr is None else cfg.omega_lr
    res = TrainResult(None, detector)
    for epoch in range(cfg.epochs):
        losses = []
        for step, idx in enumerate(_batches(len(x), cfg.batch_size, cfg.seed, epoch)):
            z = layer.forward(x[idx])
            probs = detector.forward(_crop(z, crop, size)[:, None])
            loss = detector.nll(probs, y[idx])
            _check_loss(loss, epoch, step)
            dz = detector.backward(None)
            full = np.zeros_like(z)
            _crop(full, crop, size)[...] = dz[:, 0]
            layer.backward(full)
            sgd_step(detector, cfg.lr, cfg.momentum, cfg.clip_norm)
            layer.step(omega_lr, cfg.momentum)
            losses.append(loss)
        res.step_losses.extend(losses)
        res.epoch_losses.append(float(np.mean(losses)))
        res.omega_history.append(layer.params)
        log.info("dog epoch %d loss %.5f omega %s", epoch + 1, res.epoch_losses[-1], layer.params)
    res.omega = layer.params
    return res


def split_by_brightness(dataset, threshold=DARK_THRESHOLD):
    """Partition by mean patch intensity: mean < threshold is dark."""
    x, y = _as_arrays(dataset)
    means = x.reshape(len(x), -1).mean(axis=1)
    dark = np.nonzero(means < threshold)[0]
    bright = np.nonzero(means >= threshold)[0]
    if len(dark) == 0 or len(bright) == 0:
        warnings.warn(f"brightness split at {threshold:.4f} leaves one side empty "
                      f"({len(dark)} dark, {len(bright)} bright)")
    if hasattr(dataset, "subset"):
        return dataset.subset(dark), dataset.subset(bright)
    return (x[dark], y[dark]), (x[bright], y[bright])


def write_loss_csv(path, losses):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "mean_loss"])
        for i, v in enumerate(losses, 1):
            w.writerow([i, repr(float(v))])
