import numpy as np
import pytest

from gusl import saab
from gusl.errors import InsufficientDataError, InvalidDimensionError, ShapeMismatchError


def random_patches(rng, n, window):
    return rng.normal(size=(n, window * window))


class TestFitSaab:
    def test_kernel_count_w5(self, rng):
        bank = saab.fit_saab(random_patches(rng, 80, 5), 5)
        assert bank.channels == 25
        assert bank.kernels.shape == (25, 25)

    def test_dc_row(self, rng):
        bank = saab.fit_saab(random_patches(rng, 80, 5), 5)
        np.testing.assert_allclose(bank.kernels[0], 1.0 / 5.0, atol=1e-12)

    def test_gram_identity(self, rng):
        for window in (5, 7):
            bank = saab.fit_saab(random_patches(rng, 3 * window**2, window), window)
            gram = bank.kernels @ bank.kernels.T
            assert np.abs(gram - np.eye(window**2)).max() < 1e-6

    def test_eigenvalues_sorted(self, rng):
        bank = saab.fit_saab(random_patches(rng, 200, 5), 5)
        assert (np.diff(bank.eigenvalues[1:]) <= 1e-12).all()

    def test_constant_patches_are_pure_dc(self):
        patches = np.full((30, 25), 0.3)
        bank = saab.fit_saab(patches, 5)
        assert bank.degenerate
        np.testing.assert_allclose(bank.eigenvalues[1:], 0.0, atol=1e-15)
        # DC coefficient of a constant-c patch is c * W
        assert bank.eigenvalues[0] == pytest.approx((0.3 * 5) ** 2)
        gram = bank.kernels @ bank.kernels.T
        assert np.abs(gram - np.eye(25)).max() < 1e-6

    def test_matches_independent_eigensolver(self, rng):
        # 2x2 window: covariance of DC-removed patches via a separate solver
        patches = rng.normal(size=(400, 4)) @ rng.normal(size=(4, 4)) + rng.normal(size=4)
        bank = saab.fit_saab(patches, 2)

        dc = np.full(4, 0.5)
        ac = patches - np.outer(patches @ dc, dc)
        cov = np.cov(ac, rowvar=False)
        evals, evecs = np.linalg.eig(cov)
        order = np.argsort(evals)[::-1][:3]  # drop the ~0 DC direction
        np.testing.assert_allclose(np.sort(evals[order])[::-1], bank.eigenvalues[1:], atol=1e-9)
        for i, j in enumerate(order):
            dot = abs(evecs[:, j] @ bank.kernels[1 + i])
            assert dot == pytest.approx(1.0, abs=1e-6)

    def test_energy_preservation(self, rng):
        patches = random_patches(rng, 100, 5)
        bank = saab.fit_saab(patches, 5)
        coeffs = patches @ bank.kernels.T
        np.testing.assert_allclose(
            (coeffs**2).sum(axis=1), (patches**2).sum(axis=1), rtol=1e-6
        )

    def test_deterministic(self, rng):
        patches = random_patches(rng, 60, 5)
        a = saab.fit_saab(patches, 5)
        b = saab.fit_saab(patches.copy(), 5)
        assert (a.kernels == b.kernels).all()
        assert (a.eigenvalues == b.eigenvalues).all()

    def test_insufficient_patches(self, rng):
        with pytest.raises(InsufficientDataError):
            saab.fit_saab(random_patches(rng, 24, 5), 5)

    def test_wrong_width(self, rng):
        with pytest.raises(ShapeMismatchError):
            saab.fit_saab(random_patches(rng, 30, 5), 7)


class TestApplySaab:
    def test_constant_image(self, rng):
        bank = saab.fit_saab(random_patches(rng, 60, 5), 5)
        stack = saab.apply_saab(np.full((9, 9), 0.2), bank)
        assert stack.shape == (25, 9, 9)
        np.testing.assert_allclose(stack[0], 0.2 * 5, atol=1e-12)
        np.testing.assert_allclose(stack[1:], 0.0, atol=1e-12)

    def test_matches_per_pixel_patches(self, rng):
        # oracle: explicit reflect-padded patch extraction per pixel
        bank = saab.fit_saab(random_patches(rng, 60, 5), 5)
        img = rng.random((8, 10))
        stack = saab.apply_saab(img, bank)
        padded = np.pad(img, 2, mode="reflect")
        for y in range(8):
            for x in range(10):
                patch = padded[y : y + 5, x : x + 5].ravel()
                np.testing.assert_allclose(stack[:, y, x], bank.kernels @ patch, atol=1e-12)

    def test_parseval_per_pixel(self, rng):
        bank = saab.fit_saab(random_patches(rng, 60, 5), 5)
        img = rng.random((12, 12))
        stack = saab.apply_saab(img, bank)
        padded = np.pad(img, 2, mode="reflect")
        y, x = 5, 7
        patch = padded[y : y + 5, x : x + 5]
        assert (stack[:, y, x] ** 2).sum() == pytest.approx((patch**2).sum(), rel=1e-6)

    def test_translation_equivariance_interior(self, rng):
        bank = saab.fit_saab(random_patches(rng, 60, 5), 5)
        img = rng.random((16, 16))
        shifted = np.roll(img, (1, 1), axis=(0, 1))
        a = saab.apply_saab(img, bank)
        b = saab.apply_saab(shifted, bank)
        np.testing.assert_allclose(a[:, 4:10, 4:10], b[:, 5:11, 5:11], atol=1e-12)

    def test_too_small(self, rng):
        bank = saab.fit_saab(random_patches(rng, 60, 5), 5)
        with pytest.raises(InvalidDimensionError):
            saab.apply_saab(np.zeros((4, 4)), bank)


class TestNeighborhood:
    def test_column_count(self, rng):
        stacks = [rng.random((25, 6, 6)), rng.random((49, 6, 6))]
        fm = saab.neighborhood_construct(stacks)
        assert fm.values.shape == (36, 25 * (25 + 49))
        assert len(fm.col_meta) == fm.values.shape[1]

    def test_constant_channel(self):
        fm = saab.neighborhood_construct([np.full((1, 6, 6), 0.7)])
        np.testing.assert_allclose(fm.values, 0.7)

    def test_ramp_offsets_exact(self):
        h, w = 9, 9
        yy, xx = np.mgrid[0:h, 0:w]
        ramp = (2.0 * yy + 3.0 * xx)[None]
        fm = saab.neighborhood_construct([ramp])
        y, x = 4, 4  # interior pixel
        row = fm.values[y * w + x]
        k = 0
        for dy in range(-2, 3):
            for dx in range(-2, 3):
                assert row[k] == 2.0 * (y + dy) + 3.0 * (x + dx)
                k += 1

    def test_mismatched_dims(self, rng):
        with pytest.raises(ShapeMismatchError):
            saab.neighborhood_construct([rng.random((2, 6, 6)), rng.random((2, 5, 6))])

    def test_gather_matches_full(self, rng):
        stacks = [rng.random((3, 7, 8)), rng.random((2, 7, 8))]
        fm = saab.neighborhood_construct(stacks)
        ys = np.array([0, 3, 6, 2])
        xs = np.array([0, 5, 7, 2])
        rows = saab.neighborhood_features(stacks, ys, xs)
        np.testing.assert_array_equal(rows, fm.values[ys * 8 + xs])

    def test_meta_order_and_raw_flag(self):
        meta = saab.neighborhood_meta([("ldct", 3, 2), ("diff", 2, -1)])
        assert len(meta) == 25 * 5
        assert meta[0].source == "ldct" and meta[0].kernel == 0
        assert meta[0].offset == (-2, -2)
        assert meta[2].raw  # channel 2 of the first stack is the raw pixel
        assert meta[74].source == "ldct" and meta[74].offset == (2, 2)
        assert meta[75].source == "diff" and meta[75].offset == (-2, -2)
        assert all(m.source == "diff" for m in meta[75:])
        assert not any(m.raw for m in meta[75:])
