"""Sliding-window detection and PASCAL-style precision/recall evaluation."""
import csv
import time
from dataclasses import dataclass

import numpy as np

from .adaptive import alcn_image, default_bank
from .filters import count_convolutions
from .image import as_image
from .nn import Network, build_normalizer


@dataclass
class BoundingBox:
    x: float
    y: float
    w: float
    h: float
    score: float = None
    label: int = 1

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError("box extents must be positive")


@dataclass
class PRCurve:
    points: list        # (recall, precision) after each detection, by descending score
    auc: float


def iou(a, b):
    ix = max(0.0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0.0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    union = a.w * a.h + b.w * b.h - inter
    return inter / union if union > 0 else 0.0


def _order(boxes):
    return sorted(range(len(boxes)), key=lambda i: (-boxes[i].score, boxes[i].y, boxes[i].x))


def nms(boxes, threshold=0.5):
    """Greedy suppression in (score desc, row, col) order; per label."""
    kept = []
    for i in _order(boxes):
        b = boxes[i]
        if all(k.label != b.label or iou(k, b) <= threshold for k in kept):
            kept.append(b)
    return kept


def _window_batch(img, rows, cols, size):
    half = size // 2
    return np.stack([img[r - half:r - half + size, c - half:c - half + size] for r in rows for c in cols])


def sliding_detect(img, detector, normalizer=None, bank=None, stride=4, box_size=48,
                   threshold=0.5, nms_iou=0.5, alcn_stride=8, chunk=512):
    """Score every ``stride``-spaced detector window and return NMS-filtered boxes.

    ``normalizer`` is ``None`` (raw intensities), a :class:`Network` (ALCN
    with that normalizer) or any callable mapping an image to an image.
    ``detector`` maps a batch ``(b, 1, s, s)`` to class posteriors; class 0 is
    background. Boxes of side ``box_size`` are centered on the windows.
    """
    img = as_image(img)
    if normalizer is None:
        norm = img
    elif isinstance(normalizer, Network):
        norm = alcn_image(img, normalizer, bank or default_bank(), alcn_stride)
    else:
        norm = np.asarray(normalizer(img), dtype=np.float64)
    size = detector.input_shape[-1] if isinstance(detector, Network) else 32
    half = size // 2
    h, w = img.shape
    rows = np.arange(half, h - size + half + 1, stride)
    cols = np.arange(half, w - size + half + 1, stride)
    if len(rows) == 0 or len(cols) == 0:
        return []
    centers = [(r, c) for r in rows for c in cols]
    windows = _window_batch(norm, rows, cols, size)
    probs = np.concatenate([np.asarray(detector(windows[i:i + chunk, None]))
                            for i in range(0, len(windows), chunk)])
    boxes = []
    for (r, c), p in zip(centers, probs):
        for k in range(1, p.shape[0]):
            if p[k] >= threshold:
                boxes.append(BoundingBox(c - box_size // 2, r - box_size // 2, box_size, box_size,
                                         float(p[k]), k))
    return nms(boxes, nms_iou)


def match_detections(detections, truth, iou_threshold=0.8):
    """Greedy PASCAL matching. ``detections``/``truth`` map image id -> boxes.

    Returns ``(hits, n_truth)`` where ``hits`` lists (score, is_true_positive)
    in descending score order.
    """
    n_truth = sum(len(v) for v in truth.values())
    flat = [(d, img_id) for img_id, dets in detections.items() for d in dets]
    flat.sort(key=lambda t: (-t[0].score, str(t[1]), t[0].y, t[0].x))
    used = {k: [False] * len(v) for k, v in truth.items()}
    hits = []
    for d, img_id in flat:
        best, best_iou = -1, iou_threshold
        for j, t in enumerate(truth.get(img_id, [])):
            if used[img_id][j] or t.label != d.label:
                continue
            v = iou(d, t)
            if v >= best_iou and (best < 0 or v > best_iou):
                best, best_iou = j, v
        if best >= 0:
            used[img_id][best] = True
        hits.append((d.score, best >= 0))
    return hits, n_truth


def curve_from_hits(hits, n_truth):
    points = []
    tp = 0
    for i, (_, ok) in enumerate(hits, 1):
        tp += ok
        points.append((tp / n_truth, tp / i))
    return points


def trapezoid_auc(points):
    """Area under the PR points; the curve starts at recall 0 with the
    precision of the first point that has positive recall."""
    pos = [(r, p) for r, p in points if r > 0]
    if not pos:
        return 0.0
    curve = [(0.0, pos[0][1])] + pos
    return float(sum((r1 - r0) * (p0 + p1) / 2 for (r0, p0), (r1, p1) in zip(curve, curve[1:])))


def pascal11_auc(points):
    if not points:
        return 0.0
    r = np.array([p[0] for p in points])
    p = np.array([p[1] for p in points])
    return float(np.mean([p[r >= t].max() if np.any(r >= t) else 0.0 for t in np.linspace(0, 1, 11)]))


def pr_auc(detections, truth, iou_threshold=0.8, interp="trapezoid"):
    if not 0 < iou_threshold <= 1:
        raise ValueError("iou_threshold must lie in (0, 1]")
    hits, n_truth = match_detections(detections, truth, iou_threshold)
    if n_truth == 0:
        raise ValueError("no ground-truth boxes")
    points = curve_from_hits(hits, n_truth)
    auc = pascal11_auc(points) if interp == "pascal11" else trapezoid_auc(points)
    return PRCurve(points, auc)


# ------------------------------------------------------------------- CSV

def read_boxes_csv(path, scored):
    """Read ``image_id,x,y,w,h[,score[,label]]`` rows (header optional)."""
    out = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#") or row[0].strip() == "image_id":
                continue
            if len(row) < (6 if scored else 5):
                raise ValueError(f"{path}: short row {row}")
            img_id = row[0].strip()
            x, y, w, h = (float(v) for v in row[1:5])
            score = float(row[5]) if scored else None
            label = int(row[6]) if scored and len(row) > 6 else (int(row[5]) if not scored and len(row) > 5 else 1)
            out.setdefault(img_id, []).append(BoundingBox(x, y, w, h, score, label))
    return out


def write_boxes_csv(path, detections):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image_id", "x", "y", "w", "h", "score", "label"])
        for img_id, boxes in detections.items():
            for b in boxes:
                w.writerow([img_id, b.x, b.y, b.w, b.h, repr(b.score), b.label])


def write_pr_csv(path, curve):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["recall", "precision"])
        for r, p in curve.points:
            w.writerow([repr(r), repr(p)])


# ------------------------------------------------------------- benchmark

def bench_normalize(sizes=(128,), bank=None, repetitions=5, stride=8, normalizer=None, seed=0):
    """Median wall time of :func:`alcn_image` per image size, with the number
    of bank convolutions observed in each run."""
    bank = bank or default_bank()
    normalizer = normalizer or build_normalizer(len(bank), seed=seed)
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        img = rng.random((n, n))
        times, calls = [], set()
        for _ in range(repetitions):
            with count_convolutions() as cc:
                t0 = time.perf_counter()
                alcn_image(img, normalizer, bank, stride)
                times.append(time.perf_counter() - t0)
            calls.add(cc.count)
        if calls != {len(bank)}:
            raise RuntimeError(f"expected {len(bank)} bank convolutions per image, saw {sorted(calls)}")
        rows.append({"size": n, "median_ms": 1000 * float(np.median(times)), "convolutions": len(bank)})
    return rows
