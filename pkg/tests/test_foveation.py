"""Tests for the space-variant blur."""

import numpy as np
import pytest
from scipy.ndimage import convolve

from foveal_explorer.errors import ContractError
from foveal_explorer.foveation import FoveationConfig, foveate, load_image, save_image

LAPLACIAN = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


def ring_high_freq_profile(image, center, ring_width=16.0):
    """Mean absolute Laplacian response over concentric rings."""
    resp = np.abs(convolve(image.astype(float), LAPLACIAN, mode="nearest"))
    ys, xs = np.mgrid[0 : image.shape[0], 0 : image.shape[1]]
    dist = np.hypot(xs - center[0], ys - center[1])
    max_r = min(center[0], center[1], image.shape[1] - center[0], image.shape[0] - center[1])
    profile = []
    r = 0.0
    while r + ring_width <= max_r:
        mask = (dist >= r) & (dist < r + ring_width)
        profile.append(resp[mask].mean())
        r += ring_width
    return np.array(profile)


class TestFoveate:
    def test_constant_image_unchanged(self):
        img = np.full((96, 128), 77, dtype=np.uint8)
        out = foveate(img, (30.0, 40.0), FoveationConfig(levels=4, sigma0=10.0))
        np.testing.assert_array_equal(out, img)

    def test_constant_rgb_unchanged(self):
        img = np.full((64, 64, 3), 150, dtype=np.uint8)
        out = foveate(img, (10.0, 50.0))
        np.testing.assert_array_equal(out, img)

    def test_foveal_disc_fidelity_on_checkerboard(self):
        tile = np.kron([[0, 1] * 8, [1, 0] * 8] * 8, np.ones((8, 8))) * 255
        img = tile.astype(np.uint8)
        cfg = FoveationConfig(levels=5, sigma0=30.0)
        out = foveate(img, (64.0, 64.0), cfg)
        ys, xs = np.mgrid[0:128, 0:128]
        disc = np.hypot(xs - 64.0, ys - 64.0) <= cfg.sigma0 / 2
        diff = np.abs(out.astype(int) - img.astype(int))
        assert diff[disc].max() <= 2

    def test_ring_high_frequency_decays(self):
        rng = np.random.default_rng(99)
        img = rng.integers(0, 256, (256, 256), dtype=np.uint8)
        out = foveate(img, (128.0, 128.0), FoveationConfig(levels=5, sigma0=20.0))
        profile = ring_high_freq_profile(out, (128.0, 128.0))
        assert len(profile) >= 5
        for lo, hi in zip(profile[1:], profile[:-1]):
            assert lo <= hi * 1.05

    def test_shape_and_range_preserved(self):
        rng = np.random.default_rng(5)
        img = rng.integers(40, 200, (123, 77), dtype=np.uint8)
        out = foveate(img, (38.0, 61.0))
        assert out.shape == img.shape
        assert out.dtype == img.dtype
        assert out.min() >= img.min()
        assert out.max() <= img.max()

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        img = rng.integers(0, 256, (100, 140, 3), dtype=np.uint8)
        a = foveate(img, (70.0, 50.0))
        b = foveate(img, (70.0, 50.0))
        np.testing.assert_array_equal(a, b)

    def test_fixation_out_of_bounds(self):
        img = np.zeros((32, 32), dtype=np.uint8)
        with pytest.raises(ContractError):
            foveate(img, (32.0, 5.0))
        with pytest.raises(ContractError):
            foveate(img, (5.0, -1.0))

    def test_periphery_actually_blurred(self):
        rng = np.random.default_rng(8)
        img = rng.integers(0, 256, (256, 256), dtype=np.uint8)
        out = foveate(img, (128.0, 128.0), FoveationConfig(levels=5, sigma0=16.0))
        resp = ring_high_freq_profile(out, (128.0, 128.0))
        assert resp[-1] < 0.5 * resp[0]


class TestPngRoundTrip:
    def test_save_load(self, tmp_path):
        rng = np.random.default_rng(2)
        img = rng.integers(0, 256, (40, 60, 3), dtype=np.uint8)
        path = tmp_path / "scene.png"
        save_image(path, img)
        back = load_image(path)
        np.testing.assert_array_equal(back, img)
