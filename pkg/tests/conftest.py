import itertools

import numpy as np
import pytest

from alcn.evaluate import iou

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE = []


def direct_convolve(img, taps):
    """Brute-force correlation with replicate border; independent of the library."""
    h, w = img.shape
    kh, kw = taps.shape
    ar, ac = kh // 2, kw // 2
    out = np.zeros((h, w))
    for r in range(h):
        for c in range(w):
            acc = 0.0
            for i in range(kh):
                for j in range(kw):
                    rr = min(max(r + i - ar, 0), h - 1)
                    cc = min(max(c + j - ac, 0), w - 1)
                    acc += taps[i, j] * img[rr, cc]
            out[r, c] = acc
    return out


def gaussian_oracle(sigma, size):
    x = np.arange(size) - size // 2
    g = np.exp(-(x[:, None] ** 2 + x[None, :] ** 2) / (2 * sigma ** 2))
    return g / g.sum()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def brute_force_auc(dets, truth, thr):
    """Enumerate every injective detection->truth assignment; keep the one the
    greedy rule prefers (score order; per detection: matched, higher IoU,
    lower truth index); integrate the resulting PR curve."""
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, dets[i].y, dets[i].x))
    options = [[None] + list(range(len(truth))) for _ in dets]
    best_key, best = None, None
    for assign in itertools.product(*options):
        used = [a for a in assign if a is not None]
        if len(used) != len(set(used)):
            continue
        if any(a is not None and iou(dets[i], truth[a]) < thr for i, a in enumerate(assign)):
            continue
        key = tuple((assign[i] is not None,
                     iou(dets[i], truth[assign[i]]) if assign[i] is not None else 0.0,
                     -assign[i] if assign[i] is not None else 0) for i in order)
        if best_key is None or key > best_key:
            best_key, best = key, assign
    tp, pts = 0, []
    for n, i in enumerate(order, 1):
        tp += best[i] is not None
        pts.append((tp / len(truth), tp / n))
    pos = [p for p in pts if p[0] > 0]
    if not pos:
        return 0.0
    curve = [(0.0, pos[0][1])] + pos
    return sum((r1 - r0) * (p0 + p1) / 2 for (r0, p0), (r1, p1) in zip(curve, curve[1:]))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
