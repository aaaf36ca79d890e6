import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gusl import imaging
from gusl.errors import (
    IdenticalImagesError,
    InvalidConfigError,
    InvalidDimensionError,
    ShapeMismatchError,
)


class TestDownsample:
    def test_single_block(self):
        out = imaging.downsample_mean([[1.0, 2.0], [3.0, 4.0]])
        assert out.shape == (1, 1)
        assert out[0, 0] == 2.5

    def test_constant_any_size(self):
        img = np.full((6, 10), 0.37)
        out = imaging.downsample_mean(img)
        assert out.shape == (3, 5)
        np.testing.assert_allclose(out, 0.37)

    def test_odd_dims_partial_blocks(self):
        img = np.arange(1.0, 10.0).reshape(3, 3)
        out = imaging.downsample_mean(img)
        np.testing.assert_allclose(out, [[3.0, 4.5], [7.5, 9.0]])

    def test_mean_preserved_for_even_dims(self, rng):
        for _ in range(20):
            h, w = rng.integers(1, 12, size=2) * 2
            img = rng.random((h, w))
            out = imaging.downsample_mean(img)
            assert math.isclose(out.mean(), img.mean(), rel_tol=1e-12)

    def test_too_small(self):
        with pytest.raises(InvalidDimensionError):
            imaging.downsample_mean([[1.0]])


class TestUpscale:
    def test_constant_exact(self):
        out = imaging.upscale(np.full((2, 2), 0.5), 4, 4)
        assert out.shape == (4, 4)
        assert (out == 0.5).all()

    def test_column_monotone(self):
        out = imaging.upscale([[0.0], [1.0]], 4, 1)
        assert out.shape == (4, 1)
        assert (np.diff(out[:, 0]) >= 0).all()
        assert out[0, 0] == 0.0 and out[-1, 0] == 1.0

    def test_half_pixel_values(self):
        # hand evaluation of the half-pixel sampling formula
        out = imaging.upscale([[0.0, 1.0]], 1, 4)
        np.testing.assert_allclose(out, [[0.0, 0.25, 0.75, 1.0]], atol=1e-15)

    def test_stays_within_input_range(self, rng):
        for _ in range(10):
            img = rng.random((5, 7))
            out = imaging.upscale(img, 13, 11)
            assert out.min() >= img.min() - 1e-12
            assert out.max() <= img.max() + 1e-12

    def test_smaller_target_rejected(self):
        with pytest.raises(InvalidDimensionError):
            imaging.upscale(np.zeros((4, 4)), 3, 8)


class TestPyramid:
    def test_paper_scale_dims(self):
        levels = imaging.build_pyramid(np.zeros((512, 512)), 4)
        assert [l.shape for l in levels] == [(512, 512), (256, 256), (128, 128), (64, 64)]

    def test_two_levels_is_definition(self, rng):
        img = rng.random((16, 16))
        levels = imaging.build_pyramid(img, 2)
        assert levels[0] is img or (levels[0] == img).all()
        np.testing.assert_array_equal(levels[1], imaging.downsample_mean(img))

    def test_ceil_dims(self):
        levels = imaging.build_pyramid(np.zeros((100, 64)), 3)
        assert [l.shape for l in levels] == [(100, 64), (50, 32), (25, 16)]

    def test_coarsest_too_small(self):
        assert imaging.build_pyramid(np.zeros((32, 32)), 3)[-1].shape == (8, 8)
        with pytest.raises(InvalidConfigError):
            imaging.build_pyramid(np.zeros((32, 32)), 4)  # 4x4 coarsest

    def test_level_dims_formula(self):
        dims = imaging.pyramid_level_dims(101, 37, 4)
        assert dims == [(101, 37), (51, 19), (26, 10), (13, 5)]


class TestCompose:
    def test_zero_residual_identity(self):
        np.testing.assert_array_equal(
            imaging.compose_prediction([[1.0]], [[0.0]]), [[1.0]]
        )

    def test_addition(self):
        assert imaging.compose_prediction([[0.4]], [[0.1]])[0, 0] == pytest.approx(0.5)

    def test_clip(self):
        assert imaging.compose_prediction([[0.95]], [[0.2]], clip=True)[0, 0] == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            imaging.compose_prediction(np.zeros((2, 2)), np.zeros((2, 3)))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 9), st.integers(2, 9), st.integers(0, 2**32 - 1))
    def test_zero_residual_property(self, h, w, seed):
        p = np.random.default_rng(seed).random((h, w))
        np.testing.assert_array_equal(imaging.compose_prediction(p, np.zeros((h, w))), p)


class TestPsnr:
    def test_full_scale_error(self):
        assert imaging.psnr(np.zeros((4, 4)), np.ones((4, 4)), peak=1.0) == pytest.approx(0.0)

    def test_peak_255(self):
        # MSE exactly 1 at peak 255
        a = np.zeros((8, 8))
        b = np.ones((8, 8))
        assert imaging.psnr(a, b, peak=255.0) == pytest.approx(48.1308, abs=1e-3)

    def test_identical_raises(self):
        img = np.full((3, 3), 0.2)
        with pytest.raises(IdenticalImagesError):
            imaging.psnr(img, img.copy())

    def test_symmetric_and_monotone(self, rng):
        a = rng.random((16, 16))
        b = rng.random((16, 16))
        assert imaging.psnr(a, b) == pytest.approx(imaging.psnr(b, a), abs=1e-12)
        closer = a + 0.1 * (b - a)
        assert imaging.psnr(a, closer) > imaging.psnr(a, b)


class TestSsim:
    def test_self_similarity(self, rng):
        img = rng.random((24, 24))
        assert imaging.ssim(img, img.copy()) == pytest.approx(1.0, abs=1e-9)

    def test_identical_constants(self):
        img = np.full((16, 16), 0.5)
        assert imaging.ssim(img, img.copy()) == pytest.approx(1.0, abs=1e-9)

    def test_constant_zero_vs_one(self):
        # hand evaluation: all local stats vanish, so the score reduces to
        # C1 / (1 + C1) with C1 = (0.01 * peak)^2
        a = np.zeros((16, 16))
        b = np.ones((16, 16))
        c1 = 0.01**2
        assert imaging.ssim(a, b) == pytest.approx(c1 / (1.0 + c1), abs=1e-12)

    def test_symmetric(self, rng):
        a = rng.random((20, 20))
        b = rng.random((20, 20))
        assert imaging.ssim(a, b) == pytest.approx(imaging.ssim(b, a), abs=1e-9)

    def test_too_small(self):
        with pytest.raises(InvalidDimensionError):
            imaging.ssim(np.zeros((10, 10)), np.zeros((10, 10)))

    def test_bounded(self, rng):
        for _ in range(5):
            a = rng.random((16, 16))
            b = rng.random((16, 16))
            assert -1.0 <= imaging.ssim(a, b) <= 1.0
