"""Backend selection for the convolution kernels.

The compiled Cython module is used when it was built; otherwise the numpy
fallback is loaded. Setting ``ALCN_KERNELS=python`` before import forces the
fallback, and :func:`use_backend` switches at runtime (benchmarks, tests).
"""
import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels

_active = _pykernels
if _ckernels is not None and os.environ.get("ALCN_KERNELS", "").lower() != "python":
    _active = _ckernels


def available_backends():
    return sorted(_BACKENDS)


def backend_name():
    return "cython" if _active is _ckernels and _ckernels is not None else "python"


def use_backend(name):
    """Select ``"python"`` or ``"cython"``; returns the previous backend name."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}")
    prev = backend_name()
    _active = _BACKENDS[name]
    return prev


def correlate_axis(x, taps, anchor, axis, border="replicate"):
    return _active.correlate_axis(x, taps, anchor, axis, border)


def correlate2d(x, kernel, anchor_r, anchor_c, border="replicate"):
    return _active.correlate2d(x, kernel, anchor_r, anchor_c, border)


def im2col(x, k, out):
    return _active.im2col(x, k, out)


def col2im(dcols, k, dx):
    return _active.col2im(dcols, k, dx)
