"""Color conversions against per-pixel reference implementations."""

import colorsys

import numpy as np
import pytest

from stainaug.colorspace import (
    GRAY_WEIGHTS,
    OD_EPS,
    STAIN_MATRIX,
    hsv_to_rgb,
    rgb_to_gray,
    rgb_to_hed,
    rgb_to_hsv,
    rgb_to_lab,
    rgb_to_od,
)
from stainaug.errors import InputShapeError


def random_rgb(seed, h=5, w=7):
    return np.random.default_rng(seed).random((3, h, w))


class TestHsv:
    def test_matches_colorsys_per_pixel(self):
        rgb = random_rgb(0)
        hsv = rgb_to_hsv(rgb)
        for y in range(rgb.shape[1]):
            for x in range(rgb.shape[2]):
                want = colorsys.rgb_to_hsv(*rgb[:, y, x])
                assert hsv[:, y, x] == pytest.approx(want, abs=1e-12)

    def test_round_trip(self):
        rgb = random_rgb(1)
        back = hsv_to_rgb(rgb_to_hsv(rgb))
        assert np.allclose(back, rgb, atol=1e-12)

    def test_primaries(self):
        prim = np.array([[[1.0], [0.0], [0.0]],  # unused container shape guard
                         ]).reshape(3, 1, 1)
        assert rgb_to_hsv(prim)[:, 0, 0] == pytest.approx([0.0, 1.0, 1.0])
        green = np.array([0.0, 1.0, 0.0]).reshape(3, 1, 1)
        assert rgb_to_hsv(green)[:, 0, 0] == pytest.approx([1 / 3, 1.0, 1.0])
        blue = np.array([0.0, 0.0, 1.0]).reshape(3, 1, 1)
        assert rgb_to_hsv(blue)[:, 0, 0] == pytest.approx([2 / 3, 1.0, 1.0])

    def test_gray_pixels_zero_saturation(self):
        rgb = np.full((3, 2, 2), 0.37)
        hsv = rgb_to_hsv(rgb)
        assert np.all(hsv[0] == 0.0) and np.all(hsv[1] == 0.0)
        assert np.allclose(hsv[2], 0.37)

    def test_hue_wraps_in_inverse(self):
        hsv = np.stack([np.full((1, 1), 1.25), np.ones((1, 1)), np.ones((1, 1))])
        same = np.stack([np.full((1, 1), 0.25), np.ones((1, 1)), np.ones((1, 1))])
        assert np.allclose(hsv_to_rgb(hsv), hsv_to_rgb(same), atol=1e-12)

    def test_shape_error(self):
        with pytest.raises(InputShapeError):
            rgb_to_hsv(np.zeros((4, 2, 2)))
        with pytest.raises(InputShapeError):
            hsv_to_rgb(np.zeros((2, 2)))


class TestLab:
    def test_white_is_l100(self):
        lab = rgb_to_lab(np.ones((3, 1, 1)))
        assert lab[:, 0, 0] == pytest.approx([100.0, 0.0, 0.0], abs=1e-3)

    def test_black_is_l0(self):
        lab = rgb_to_lab(np.zeros((3, 1, 1)))
        assert lab[:, 0, 0] == pytest.approx([0.0, 0.0, 0.0], abs=1e-8)

    def test_neutral_grays_have_zero_chroma(self):
        # published sRGB->XYZ constants leave ~1e-5 residual chroma on grays
        rgb = np.full((3, 1, 4), 1.0) * np.array([0.2, 0.4, 0.6, 0.8])
        lab = rgb_to_lab(rgb)
        assert np.allclose(lab[1:], 0.0, atol=1e-4)
        assert np.all(np.diff(lab[0, 0]) > 0)  # L increases with lightness

    def test_matches_skimage_when_available(self):
        skimage_color = pytest.importorskip("skimage.color")
        rgb = random_rgb(2)
        want = skimage_color.rgb2lab(np.moveaxis(rgb, 0, -1))
        got = np.moveaxis(rgb_to_lab(rgb), 0, -1)
        assert np.allclose(got, want, atol=1e-2)


class TestHed:
    def test_od_definition(self):
        rgb = np.array([1.0, 0.1, 0.01]).reshape(3, 1, 1)
        od = rgb_to_od(rgb)
        assert od[:, 0, 0] == pytest.approx([0.0, 1.0, 2.0], abs=1e-12)

    def test_od_floor(self):
        od = rgb_to_od(np.zeros((3, 1, 1)))
        assert np.all(od == -np.log10(OD_EPS))

    def test_pure_stain_recovered(self):
        # transmittance of one unit of pure hematoxylin: od = H-row
        for k in range(3):
            od_row = STAIN_MATRIX[k]
            rgb = (10.0 ** -od_row).reshape(3, 1, 1)
            hed = rgb_to_hed(rgb)[:, 0, 0]
            want = np.zeros(3)
            want[k] = 1.0
            assert hed == pytest.approx(want, abs=1e-9)

    def test_linear_solve_inverse(self):
        rng = np.random.default_rng(3)
        conc = rng.uniform(0.05, 0.8, size=(3, 4, 4))
        od = np.einsum("ij,ihw->jhw", STAIN_MATRIX, conc)
        rgb = 10.0 ** -od
        assert np.allclose(rgb_to_hed(rgb), conc, atol=1e-9)

    def test_matches_skimage_when_available(self):
        skimage_color = pytest.importorskip("skimage.color")
        rgb = 0.05 + 0.95 * random_rgb(4)
        want = np.moveaxis(skimage_color.rgb2hed(np.moveaxis(rgb, 0, -1)), -1, 0)
        got = rgb_to_hed(rgb)
        # skimage measures optical density in units of its 1e-6 floor
        # (od = ln(rgb)/ln(1e-6) = -log10(rgb)/6) and clips stains at 0
        assert np.allclose(np.maximum(got / 6.0, 0.0), want, atol=1e-9)


class TestGray:
    def test_weights(self):
        rgb = random_rgb(5)
        want = (GRAY_WEIGHTS[0] * rgb[0] + GRAY_WEIGHTS[1] * rgb[1]
                + GRAY_WEIGHTS[2] * rgb[2])
        assert np.allclose(rgb_to_gray(rgb), want, atol=1e-15)

    def test_white_black(self):
        assert rgb_to_gray(np.ones((3, 1, 1)))[0, 0] == pytest.approx(1.0)
        assert rgb_to_gray(np.zeros((3, 1, 1)))[0, 0] == 0.0
