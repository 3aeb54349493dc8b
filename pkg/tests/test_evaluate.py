import numpy as np
import pytest
from hypothesis import given, strategies as st

from alcn import evaluate
from alcn.evaluate import BoundingBox as Box
from alcn.evaluate import iou, nms, pr_auc, sliding_detect
from conftest import brute_force_auc


class BrightSpotDetector:
    """Stub detector: posterior of class 1 is the window's mean intensity."""

    def __call__(self, batch):
        m = batch.reshape(len(batch), -1).mean(axis=1)
        return np.stack([1 - m, m], axis=1)


class CenterPixelDetector:
    """Fires with the window's central pixel value."""

    def __call__(self, batch):
        v = batch[:, 0, 16, 16]
        return np.stack([1 - v, v], axis=1)


# ---------------------------------------------------------------- IoU

def test_iou_examples():
    a = Box(0, 0, 300, 300)
    assert iou(a, a) == 1.0
    assert iou(a, Box(400, 0, 300, 300)) == 0.0
    assert iou(a, Box(150, 0, 300, 300)) == pytest.approx(1 / 3)


boxes = st.builds(Box, st.integers(0, 50), st.integers(0, 50), st.integers(1, 40), st.integers(1, 40))


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    assert iou(a, b) == iou(b, a)
    assert 0.0 <= iou(a, b) <= 1.0
    assert iou(a, a) == 1.0


def test_box_validation():
    with pytest.raises(ValueError):
        Box(0, 0, 0, 5)


# ---------------------------------------------------------------- NMS / sliding

def test_nms_equal_scores_keeps_first_position():
    a, b = Box(10, 12, 48, 48, 0.9), Box(12, 12, 48, 48, 0.9)
    assert nms([b, a]) == [a]


def test_nms_keeps_separated_and_other_labels():
    a, b = Box(0, 0, 10, 10, 0.9), Box(50, 50, 10, 10, 0.8)
    c = Box(1, 0, 10, 10, 0.7, label=2)
    assert nms([c, b, a]) == [a, b, c]


def test_sliding_background_everywhere():
    assert sliding_detect(np.zeros((64, 64)), BrightSpotDetector()) == []


def test_sliding_single_firing():
    img = np.zeros((80, 80))
    img[40, 40] = 1.0
    out = sliding_detect(img, CenterPixelDetector(), stride=4, box_size=48)
    assert len(out) == 1
    assert (out[0].x, out[0].y) == (40 - 24, 40 - 24)


def test_sliding_two_close_firings_one_box():
    img = np.zeros((80, 80))
    img[40, 40] = img[40, 42] = 1.0
    out = sliding_detect(img, CenterPixelDetector(), stride=2, box_size=48)
    assert len(out) == 1 and out[0].x == 40 - 24


def test_sliding_padding_invariance():
    img = np.zeros((70, 70))
    img[20:40, 30:50] = 0.9
    base = sliding_detect(img, BrightSpotDetector(), stride=4, threshold=0.3)
    assert base
    # right/bottom padding that adds no window positions
    padded = np.pad(img, ((0, 1), (0, 1)))
    assert sliding_detect(padded, BrightSpotDetector(), stride=4, threshold=0.3) == base
    # left/top padding by a stride multiple shifts every box
    shifted = sliding_detect(np.pad(img, ((8, 0), (8, 0))), BrightSpotDetector(), stride=4, threshold=0.3)
    assert [(b.x - 8, b.y - 8, b.score) for b in shifted] == [(b.x, b.y, b.score) for b in base]


def test_sliding_callable_normalizer():
    img = np.full((40, 40), 0.2)
    assert sliding_detect(img, BrightSpotDetector(), normalizer=lambda x: 1 - x, threshold=0.5)


# ---------------------------------------------------------------- PR / AUC

def test_pr_example():
    truth = {"a": [Box(0, 0, 10, 10), Box(100, 100, 10, 10)]}
    dets = {"a": [Box(0, 0, 10, 10, 0.9), Box(100, 100, 10, 10, 0.8), Box(50, 50, 10, 10, 0.95)]}
    curve = pr_auc(dets, truth)
    assert curve.points == [(0.0, 0.0), (0.5, 0.5), (1.0, pytest.approx(2 / 3))]
    assert curve.auc == pytest.approx(0.5417, abs=1e-4)


def test_pr_perfect_and_empty():
    truth = {"a": [Box(0, 0, 10, 10)], "b": [Box(5, 5, 10, 10)]}
    perfect = {"a": [Box(0, 0, 10, 10, 0.7)], "b": [Box(5, 5, 10, 10, 0.6)]}
    assert pr_auc(perfect, truth).auc == 1.0
    assert pr_auc({}, truth).auc == 0.0
    with pytest.raises(ValueError):
        pr_auc(perfect, {})
    with pytest.raises(ValueError):
        pr_auc(perfect, truth, iou_threshold=0.0)


def test_pascal11():
    truth = {"a": [Box(0, 0, 10, 10)]}
    assert pr_auc({"a": [Box(0, 0, 10, 10, 0.5)]}, truth, interp="pascal11").auc == 1.0


def test_recall_non_decreasing_and_auc_bounds(rng):
    truth = {i: [Box(*rng.integers(0, 30, 2), 10, 10) for _ in range(3)] for i in range(4)}
    dets = {i: [Box(*rng.integers(0, 30, 2), 10, 10, float(rng.random())) for _ in range(6)] for i in range(4)}
    curve = pr_auc(dets, truth, 0.3)
    r = [p[0] for p in curve.points]
    assert all(b >= a for a, b in zip(r, r[1:]))
    assert 0.0 <= curve.auc <= 1.0


def test_pr_matches_brute_force():
    rng = np.random.default_rng(8)
    for _ in range(200):
        nt, nd = rng.integers(1, 4), rng.integers(0, 6)
        truth = [Box(*rng.integers(0, 8, 2), 6, 6) for _ in range(nt)]
        dets = [Box(*rng.integers(0, 8, 2), 6, 6, float(rng.choice([0.3, 0.5, 0.9]))) for _ in range(nd)]
        got = pr_auc({"i": dets}, {"i": truth}, 0.4).auc
        assert got == pytest.approx(brute_force_auc(dets, truth, 0.4), abs=1e-12)


# ---------------------------------------------------------------- CSV

def test_csv_roundtrip(tmp_path):
    dets = {"img1": [Box(1.0, 2.0, 3.0, 4.0, 0.25)], "img2": [Box(5, 6, 7, 8, 0.5, 2)]}
    f = tmp_path / "d.csv"
    evaluate.write_boxes_csv(f, dets)
    back = evaluate.read_boxes_csv(f, scored=True)
    assert back["img1"][0] == dets["img1"][0] and back["img2"][0].label == 2
    g = tmp_path / "t.csv"
    g.write_text("image_id,x,y,w,h\nimg1,1,2,3,4\n")
    assert evaluate.read_boxes_csv(g, scored=False)["img1"][0].score is None
    g.write_text("img1,1,2\n")
    with pytest.raises(ValueError):
        evaluate.read_boxes_csv(g, scored=False)


def test_write_pr_csv(tmp_path):
    f = tmp_path / "pr.csv"
    evaluate.write_pr_csv(f, evaluate.PRCurve([(0.5, 1.0)], 0.5))
    assert f.read_text().splitlines() == ["recall,precision", "0.5,1.0"]


# ---------------------------------------------------------------- benchmark

def test_bench_rows():
    from alcn.nn import build_normalizer
    rows = evaluate.bench_normalize(sizes=(24, 40), repetitions=1,
                                    normalizer=build_normalizer(input_size=20), stride=4)
    assert [r["size"] for r in rows] == [24, 40]
    assert all(r["convolutions"] == 10 and r["median_ms"] > 0 for r in rows)
