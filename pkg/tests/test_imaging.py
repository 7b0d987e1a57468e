import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from specdiff import imaging
from specdiff.errors import DegenerateGeometryError, EmptyRegionError


def checkerboard(h, w, block=4):
    ys, xs = np.mgrid[0:h, 0:w]
    return (((ys // block) + (xs // block)) % 2) * 200.0


class TestGrayscale:
    def test_equal_channels(self):
        img = np.full((5, 5, 3), 100.0)
        assert np.allclose(imaging.grayscale(img), 100.0)

    def test_pure_red(self):
        img = np.zeros((1, 1, 3))
        img[0, 0, 0] = 255.0
        # weighted-sum oracle: 0.299 * 255
        assert imaging.grayscale(img)[0, 0] == pytest.approx(76.245, abs=1e-9)

    def test_all_zero(self):
        assert np.all(imaging.grayscale(np.zeros((4, 6, 3))) == 0.0)

    def test_single_channel_passthrough(self):
        img = np.arange(12.0).reshape(3, 4)
        assert np.array_equal(imaging.grayscale(img), img)

    @given(arrays(np.float64, (6, 7, 3), elements=st.floats(0, 255)))
    @settings(max_examples=50, deadline=None)
    def test_weighted_sum_property(self, img):
        out = imaging.grayscale(img)
        expected = 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]
        assert np.allclose(out, expected, atol=1e-9)


class TestRotateUpright:
    def test_horizontal_eyes_identity(self):
        img = checkerboard(20, 20)
        out, affine = imaging.rotate_upright(img, (5, 10), (15, 10))
        assert np.array_equal(out, img)
        assert np.allclose(affine, [[1, 0, 0], [0, 1, 0]])

    def test_45_degrees_levels_eyes(self):
        img = checkerboard(30, 30)
        _, affine = imaging.rotate_upright(img, (0, 10), (10, 0))
        l = imaging.apply_affine(affine, (0, 10))
        r = imaging.apply_affine(affine, (10, 0))
        assert abs(l[1] - r[1]) < 1e-9
        assert l[0] < r[0]

    def test_round_trip_90_degrees(self):
        img = checkerboard(32, 32)
        once, _ = imaging.rotate_upright(img, (16, 0), (16, 31))   # rotates -90
        back, _ = imaging.rotate_upright(once, (16, 31), (16, 0))  # rotates +90
        # compare away from borders where out-of-bounds zeros bleed in
        assert np.max(np.abs(back[8:-8, 8:-8] - img[8:-8, 8:-8])) <= 2.0

    def test_coincident_eyes_error(self):
        with pytest.raises(DegenerateGeometryError):
            imaging.rotate_upright(checkerboard(8, 8), (3, 3), (3, 3))

    def test_transformed_eye_line_horizontal_random(self):
        rng = np.random.default_rng(0)
        img = checkerboard(16, 16)
        for _ in range(20):
            l = tuple(rng.uniform(0, 15, 2))
            r = tuple(rng.uniform(0, 15, 2))
            if l == r:
                continue
            _, affine = imaging.rotate_upright(img, l, r)
            lt = imaging.apply_affine(affine, l)
            rt = imaging.apply_affine(affine, r)
            assert abs(lt[1] - rt[1]) < 1e-6


class TestCrop:
    def test_full_image(self):
        img = checkerboard(10, 12)
        box = imaging.RegionBox(0, 0, 10, 12)
        assert np.array_equal(imaging.crop(img, box), img)

    def test_single_pixel(self):
        img = np.arange(20.0).reshape(4, 5)
        out = imaging.crop(img, imaging.RegionBox(2, 3, 3, 4))
        assert out.shape == (1, 1)
        assert out[0, 0] == img[2, 3]

    def test_partially_outside_clamped(self):
        img = np.arange(20.0).reshape(4, 5)
        out = imaging.crop(img, imaging.RegionBox(-2, 3, 2, 9))
        assert np.array_equal(out, img[0:2, 3:5])

    def test_empty_after_clamp(self):
        img = np.zeros((4, 5))
        with pytest.raises(EmptyRegionError):
            imaging.crop(img, imaging.RegionBox(10, 0, 12, 2))


class TestGaussianFilter:
    def test_constant_preserved(self):
        img = np.full((9, 9), 37.0)
        assert np.allclose(imaging.gaussian_filter(img, 1.5), 37.0, atol=1e-9)

    def test_impulse_center_weight(self):
        # oracle: normalized 2D kernel evaluated directly, radius ceil(3*sigma)
        r = 3
        x = np.arange(-r, r + 1)
        k1 = np.exp(-x.astype(float) ** 2 / 2.0)
        k1 /= k1.sum()
        expected = k1[r] ** 2  # 0.159241...
        img = np.zeros((21, 21))
        img[10, 10] = 1.0
        out = imaging.gaussian_filter(img, 1.0)
        assert out[10, 10] == pytest.approx(expected, abs=1e-12)

    def test_interior_impulse_mass_preserved(self):
        img = np.zeros((31, 31))
        img[15, 15] = 200.0
        out = imaging.gaussian_filter(img, 2.0)
        assert out.sum() == pytest.approx(200.0, abs=1e-6)

    def test_output_within_input_range(self):
        rng = np.random.default_rng(3)
        img = rng.uniform(10, 240, (17, 23))
        out = imaging.gaussian_filter(img, 2.5)
        assert out.min() >= img.min() - 1e-9
        assert out.max() <= img.max() + 1e-9

    def test_bad_sigma(self):
        with pytest.raises(ValueError):
            imaging.gaussian_filter(np.zeros((4, 4)), 0.0)


class TestResizeBilinear:
    def test_same_size_identity(self):
        img = checkerboard(8, 8)
        assert np.array_equal(imaging.resize_bilinear(img, 8, 8), img)

    def test_constant(self):
        out = imaging.resize_bilinear(np.full((5, 7), 42.0), 11, 3)
        assert np.allclose(out, 42.0)

    def test_2x2_to_1x1_average(self):
        img = np.array([[0.0, 100.0], [100.0, 200.0]])
        out = imaging.resize_bilinear(img, 1, 1)
        assert out[0, 0] == pytest.approx(100.0, abs=1e-12)

    @given(arrays(np.float64, (5, 6), elements=st.floats(0, 255)),
           st.integers(1, 12), st.integers(1, 12))
    @settings(max_examples=50, deadline=None)
    def test_range_property(self, img, oh, ow):
        out = imaging.resize_bilinear(img, oh, ow)
        assert out.min() >= img.min() - 1e-9
        assert out.max() <= img.max() + 1e-9


class TestIo:
    def test_png_roundtrip(self, tmp_path):
        img = checkerboard(12, 10)
        path = tmp_path / "cb.png"
        imaging.save_image(img, path)
        assert np.array_equal(imaging.load_image(path), img)

    def test_pgm_roundtrip(self, tmp_path):
        img = np.arange(30.0).reshape(5, 6)
        path = tmp_path / "img.pgm"
        imaging.save_image(img, path)
        assert np.array_equal(imaging.load_image(path), img)

    def test_rgb_ppm_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        img = np.floor(rng.uniform(0, 256, (4, 5, 3)))
        path = tmp_path / "img.ppm"
        imaging.save_image(img, path)
        assert np.array_equal(imaging.load_image(path), img)

    def test_quantize_round_half_away(self):
        assert imaging.quantize_u8(np.array([0.5, 1.4, 254.6, 300.0])).tolist() == \
            [1, 1, 255, 255]
