"""Adaptive local contrast normalization for detection under illumination changes.

The main entry points are re-exported here; submodules hold the rest:
``filters`` (Gaussian kernels and convolution), ``image`` (I/O, windows,
Lab), ``classic`` (baseline normalizers), ``adaptive`` (the learned
normalization), ``nn`` (CNN stack), ``synth`` (training data), ``train``,
``evaluate`` and ``cli``.
"""
from .adaptive import (KernelBank, alcn_color, alcn_image, alcn_lab, alcn_window, default_bank,
                       effective_width, make_bank, predict_weights, weight_maps)
from .classic import (ClaheParams, DoGParams, LrnParams, clahe, dlcn, dog, hist_eq, lrn,
                      normalize_standard, slcn, sqi, whitening_filter)
from .evaluate import BoundingBox, PRCurve, iou, nms, pr_auc, sliding_detect
from .filters import Kernel2D, convolve, convolve_separable, count_convolutions, gaussian_kernel
from .image import Window, extract_window, lab_to_rgb, load_image, rgb_to_lab, save_image
from .kernels import backend_name
from .nn import Network, build_detector, build_normalizer, load_model, save_model
from .synth import AugmentParams, Dataset, ForegroundAsset, generate_corpus, load_dataset, save_dataset
from .train import TrainConfig, dog_param_train, joint_train, split_by_brightness

__version__ = "0.1.0"
