import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from alcn import adaptive, classic, nn
from alcn.adaptive import alcn_image, alcn_window, default_bank, weight_maps
from alcn.classic import DoGParams
from alcn.filters import convolve_separable, count_convolutions
from alcn.image import extract_window

BANK = default_bank()


class ConstantPredictor:
    """Stub normalizer returning the same weight vector for every window."""

    def __init__(self, w):
        self.w = np.asarray(w, dtype=np.float64)
        self.calls = 0

    def __call__(self, batch):
        self.calls += len(batch)
        return np.tile(self.w, (len(batch), 1))


class MeanPredictor:
    """Stub whose output depends on the window: w = e_0 * mean + e_3 * (1 - mean)."""

    def __call__(self, batch):
        m = batch.reshape(len(batch), -1).mean(axis=1)
        out = np.zeros((len(batch), len(BANK)))
        out[:, 0], out[:, 3] = m, 1 - m
        return out


def onehot(k, n=10):
    e = np.zeros(n)
    e[k] = 1.0
    return e


# ---------------------------------------------------------------- bank

def test_default_bank():
    assert BANK.sigmas == tuple(i / 2 for i in range(1, 11))
    for k in BANK.kernels:
        assert k.taps.sum() == pytest.approx(1.0, abs=1e-12)
    assert BANK.max_radius == 15


# ---------------------------------------------------------------- window form

def test_window_onehot_is_smoothing(rng):
    win = rng.random((20, 20))
    for k in (0, 4, 9):
        np.testing.assert_allclose(alcn_window(win, onehot(k)), convolve_separable(win, BANK.sigmas[k]), atol=1e-14)


@pytest.mark.parametrize("s1,s2,k1,k2", [(1.0, 2.0, 1.0, 1.0), (0.5, 3.5, 0.7, 1.3), (2.5, 1.5, 2.0, 0.4)])
def test_window_encodes_dog(rng, s1, s2, k1, k2):
    win = rng.random((24, 24))
    w = np.zeros(10)
    w[BANK.sigmas.index(s2)] += k2
    w[BANK.sigmas.index(s1)] -= k1
    np.testing.assert_allclose(alcn_window(win, w), classic.dog(win, DoGParams(k1, k2, s1, s2)), atol=1e-12)


def test_every_grid_dog_is_reproducible(rng):
    win = rng.random((16, 16))
    for i, s1 in enumerate(BANK.sigmas):
        for j, s2 in enumerate(BANK.sigmas):
            if i == j:
                continue
            w = np.zeros(10)
            w[j], w[i] = 1.2, -0.8
            np.testing.assert_allclose(alcn_window(win, w), classic.dog(win, DoGParams(0.8, 1.2, s1, s2)),
                                       atol=1e-12)


@given(st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=25, deadline=None)
def test_window_linear_in_w(a, b):
    rng = np.random.default_rng(0)
    win, u, v = rng.random((12, 12)), rng.standard_normal(10), rng.standard_normal(10)
    np.testing.assert_allclose(alcn_window(win, a * u + b * v),
                               a * alcn_window(win, u) + b * alcn_window(win, v), atol=1e-12)


def test_window_length_mismatch():
    with pytest.raises(ValueError):
        alcn_window(np.zeros((8, 8)), np.ones(9))
    with pytest.raises(ValueError):
        alcn_window(np.zeros((8, 8)), np.full(10, np.nan))


def test_effective_width():
    assert adaptive.effective_width(onehot(3), BANK.sigmas) == 2.0
    assert adaptive.effective_width(np.array([1.0, -5.0] + [0.0] * 7 + [1.0]), BANK.sigmas) == 2.75
    assert adaptive.effective_width(-np.ones(10), BANK.sigmas) == 0.0


# ---------------------------------------------------------------- predictor

def test_predict_weights_zero_network():
    net = nn.build_normalizer()
    for p in net.params():
        p.data[...] = 0.0
    bias = np.linspace(-1, 1, 10)
    net.params()[-1].data[...] = bias
    np.testing.assert_array_equal(adaptive.predict_weights(net, np.random.default_rng(0).random((48, 48))), bias)


def test_predict_weights_deterministic_and_checked(rng):
    net = nn.build_normalizer(seed=1)
    win = extract_window(rng.random((60, 60)), (30, 30), 48)
    a, b = adaptive.predict_weights(net, win), adaptive.predict_weights(net, win)
    assert a.shape == (10,) and np.array_equal(a, b)
    with pytest.raises(ValueError):
        adaptive.predict_weights(net, np.zeros((32, 32)))


# ---------------------------------------------------------------- image form

def test_constant_maps_match_window_form_interior(rng):
    img = rng.random((80, 90))
    w = rng.standard_normal(10)
    out = alcn_image(img, ConstantPredictor(w), stride=8)
    r0 = BANK.max_radius
    for r, c in [(r0, r0), (40, 45), (80 - r0 - 1, 90 - r0 - 1), (30, 70)]:
        win = extract_window(img, (r, c), 48)
        ref = alcn_window(win, w)[24, 24]
        assert abs(out[r, c] - ref) <= 1e-10


def test_image_onehot_is_smoothing(rng):
    img = rng.random((33, 41))
    out = alcn_image(img, ConstantPredictor(onehot(6)), stride=5)
    np.testing.assert_allclose(out, convolve_separable(img, BANK.sigmas[6]), atol=1e-13)


def test_stride_fill_exact_for_constant_maps(rng):
    img = rng.random((30, 27))
    w = rng.standard_normal(10)
    np.testing.assert_array_equal(alcn_image(img, ConstantPredictor(w), stride=4),
                                  alcn_image(img, ConstantPredictor(w), stride=1))


def test_weight_maps_nearest_fill(rng):
    img = rng.random((20, 13))
    maps = weight_maps(img, MeanPredictor(), stride=4)
    assert maps.shape == (10, 20, 13)
    # every 4x4 block is constant and equals the prediction at its center (1, 1)+4k;
    # the last partial block's center may lie past the image edge (replicated)
    padded = np.pad(img, 48, mode="edge")
    for r in range(0, 20, 4):
        for c in range(0, 13, 4):
            block = maps[0, r:r + 4, c:c + 4]
            assert np.ptp(block) == 0
            win = padded[48 + r + 1 - 24:48 + r + 1 + 24, 48 + c + 1 - 24:48 + c + 1 + 24]
            assert block[0, 0] == pytest.approx(win.mean(), abs=1e-14)


def test_eq12_definition_with_varying_maps(rng):
    img = rng.random((24, 24))
    out, maps = alcn_image(img, MeanPredictor(), stride=3, return_maps=True)
    expected = sum(convolve_separable(maps[k] * img, s) for k, s in enumerate(BANK.sigmas))
    np.testing.assert_allclose(out, expected, atol=1e-13)


def test_one_convolution_per_kernel(rng):
    img = rng.random((64, 64))
    with count_convolutions() as c:
        alcn_image(img, MeanPredictor(), stride=8)
    assert c.count == len(BANK)
    with count_convolutions() as c:
        alcn_image(rng.random((128, 100)), MeanPredictor(), stride=2)
    assert c.count == len(BANK)


@pytest.mark.parametrize("shape,stride", [((37, 29), 3), ((16, 16), 1), ((50, 41), 8)])
def test_shared_inference_matches_per_window(shape, stride):
    net = nn.build_normalizer(seed=2, input_size=20)
    img = np.random.default_rng(3).random(shape)
    a = weight_maps(img, net, stride=stride, shared=True)
    b = weight_maps(img, net, stride=stride, shared=False)
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_prediction_image_contract():
    x = np.array([[0.2, 0.6]])
    assert adaptive.prediction_image(x) is x
    np.testing.assert_allclose(adaptive.prediction_image(np.array([[-1.0, 3.0]])), [[0.0, 1.0]])
    np.testing.assert_array_equal(adaptive.prediction_image(np.full((2, 2), 5.0)), 0.0)


def test_weight_maps_bad_stride():
    with pytest.raises(ValueError):
        weight_maps(np.zeros((8, 8)), MeanPredictor(), stride=0)


def test_grid_centers():
    assert adaptive.grid_centers(10, 4).tolist() == [1, 5, 9]
    assert adaptive.grid_centers(5, 1).tolist() == [0, 1, 2, 3, 4]


# ---------------------------------------------------------------- color

def test_color_gray_stays_gray(rng):
    g = (rng.random((24, 24)) * 255).astype(np.uint8)
    c = np.stack([g, g, g], axis=-1)
    out = adaptive.alcn_color(c, MeanPredictor())
    assert out.dtype == np.uint8
    diff = out.astype(int)
    assert np.abs(diff[..., 0] - diff[..., 1]).max() <= 1 and np.abs(diff[..., 1] - diff[..., 2]).max() <= 1


def test_color_chroma_untouched(rng):
    from alcn.image import rgb_to_lab
    c = (rng.random((16, 16, 3)) * 255).astype(np.uint8)
    L, ab = rgb_to_lab(c)
    L_out, ab_out = adaptive.alcn_lab(L, ab, ConstantPredictor(onehot(0)))
    assert ab_out is ab
    assert L_out.min() == pytest.approx(L.min()) and L_out.max() == pytest.approx(L.max())


def test_color_valid_output(rng):
    c = (rng.random((20, 30, 3)) * 255).astype(np.uint8)
    out = adaptive.alcn_color(c, ConstantPredictor(rng.standard_normal(10)))
    assert out.shape == c.shape and out.dtype == np.uint8
