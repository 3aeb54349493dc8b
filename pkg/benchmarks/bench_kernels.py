"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the median wall time per backend for separable Gaussian smoothing,
dense 2D correlation, a conv-layer forward/backward (im2col/col2im), and
whole-image ALCN, plus the speedup of the compiled backend.
"""
import argparse
import time

import numpy as np

from alcn import kernels
from alcn.adaptive import alcn_image, default_bank
from alcn.filters import convolve, convolve_separable, gaussian_kernel
from alcn.nn import Conv2D, build_normalizer


def median_time(fn, repeat):
    fn()  # warm-up
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def cases():
    rng = np.random.default_rng(0)
    img = rng.random((256, 256))
    stack = rng.random((64, 48, 48))
    k = gaussian_kernel(2.5)
    conv = Conv2D(20, 50, 5, rng)
    feats = rng.standard_normal((32, 22, 22, 20))
    net = build_normalizer(seed=0)
    bank = default_bank()
    small = rng.random((128, 128))

    def conv_step():
        out = conv.forward(feats)
        conv.backward(np.ones_like(out))

    return [
        ("separable sigma=5, 256x256", lambda: convolve_separable(img, 5.0)),
        ("separable sigma=2, 64x48x48", lambda: convolve_separable(stack, 2.0)),
        ("direct 17x17 kernel, 256x256", lambda: convolve(img, k)),
        ("conv 20->50 5x5 fwd+bwd, 32x22x22", conv_step),
        ("alcn_image 128x128 stride 8", lambda: alcn_image(small, net, bank, 8)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)}")
    print(f"{'case':36s} " + " ".join(f"{b + ' ms':>12s}" for b in backends) + "   speedup")
    prev = kernels.backend_name()
    try:
        for name, fn in cases():
            row = {}
            for b in backends:
                kernels.use_backend(b)
                row[b] = 1000 * median_time(fn, args.repeat)
            speed = f"{row['python'] / row['cython']:8.2f}x" if "cython" in row else ""
            print(f"{name:36s} " + " ".join(f"{row[b]:12.2f}" for b in backends) + f"   {speed}")
    finally:
        kernels.use_backend(prev)


if __name__ == "__main__":
    main()
