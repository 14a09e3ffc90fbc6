"""Pixel transforms: flips, rotation, resize, normalization, stats."""

import numpy as np
import pytest

from lungnet.errors import ConfigError
from lungnet.rng import make_rng
from lungnet.transforms import (AugmentConfig, NormStats, augment, hflip,
                                normalize, norm_stats_from_images, resize,
                                rotate, vflip)


def random_image(rng, c=3, h=12, w=12):
    return rng.uniform(0, 1, (c, h, w)).astype(np.float32)


class TestFlipsAndRotation:
    def test_hflip_is_involution(self, rng):
        img = random_image(rng)
        np.testing.assert_array_equal(hflip(hflip(img)), img)

    def test_vflip_is_involution(self, rng):
        img = random_image(rng)
        np.testing.assert_array_equal(vflip(vflip(img)), img)

    def test_hflip_mirrors_width(self):
        img = np.arange(6, dtype=np.float32).reshape(1, 2, 3)
        np.testing.assert_array_equal(hflip(img)[0, 0], [2, 1, 0])

    def test_vflip_mirrors_height(self):
        img = np.arange(6, dtype=np.float32).reshape(1, 2, 3)
        np.testing.assert_array_equal(vflip(img)[0, :, 0], [3, 0])

    def test_rotate_zero_is_identity(self, rng):
        img = random_image(rng)
        np.testing.assert_array_equal(rotate(img, 0.0), img)

    def test_rotate_keeps_shape_and_range(self, rng):
        img = random_image(rng)
        out = rotate(img, 7.3)
        assert out.shape == img.shape
        assert out.min() >= 0.0 and out.max() <= 1.0 + 1e-6

    def test_rotate_90_matches_numpy(self):
        img = np.zeros((1, 5, 5), dtype=np.float32)
        img[0, 1, 3] = 1.0
        out = rotate(img, 90.0)
        np.testing.assert_allclose(out[0], np.rot90(img[0], k=-1), atol=1e-6)

    def test_rotation_uses_zero_fill(self):
        img = np.ones((1, 15, 15), dtype=np.float32)
        out = rotate(img, 10.0)
        assert out.min() == 0.0  # far corners sample fully outside the source


class TestResize:
    def test_same_size_is_identity(self, rng):
        img = random_image(rng, h=8, w=8)
        np.testing.assert_array_equal(resize(img, 8), img)

    def test_constant_image_stays_constant(self):
        img = np.full((3, 10, 14), 0.25, dtype=np.float32)
        out = resize(img, 7)
        np.testing.assert_allclose(out, 0.25, atol=1e-6)
        assert out.shape == (3, 7, 7)

    def test_downscale_by_two_averages_blocks(self):
        img = np.arange(16, dtype=np.float32).reshape(1, 4, 4)
        out = resize(img, 2)
        ref = img.reshape(1, 2, 2, 2, 2).mean(axis=(2, 4))
        np.testing.assert_allclose(out, ref, atol=1e-6)


class TestAugment:
    def test_deterministic_given_seed(self, rng):
        img = random_image(rng, h=20, w=20)
        cfg = AugmentConfig(target_size=16)
        a = augment(img, cfg, make_rng(5))
        b = augment(img, cfg, make_rng(5))
        np.testing.assert_array_equal(a, b)

    def test_output_shape_contract(self, rng):
        img = random_image(rng, h=30, w=17)
        out = augment(img, AugmentConfig(), make_rng(0))
        assert out.shape == (3, 224, 224)

    def test_no_flip_no_rotation_reduces_to_resize(self, rng):
        img = random_image(rng, h=20, w=20)
        cfg = AugmentConfig(hflip_prob=0.0, vflip_prob=0.0,
                            max_rotation_deg=0.0, target_size=16)
        np.testing.assert_array_equal(augment(img, cfg, make_rng(1)),
                                      resize(img, 16))

    def test_forced_hflip_twice_restores_original(self, rng):
        img = random_image(rng, h=16, w=16)
        cfg = AugmentConfig(hflip_prob=1.0, vflip_prob=0.0,
                            max_rotation_deg=0.0, target_size=16)
        once = augment(img, cfg, make_rng(2))
        twice = augment(once, cfg, make_rng(3))
        np.testing.assert_array_equal(twice, img)

    def test_probability_validation(self):
        with pytest.raises(ConfigError):
            AugmentConfig(hflip_prob=1.5)
        with pytest.raises(ConfigError):
            AugmentConfig(max_rotation_deg=-1.0)


class TestNormalization:
    def test_pixel_at_mean_maps_to_zero(self):
        stats = NormStats(mean=np.array([0.25, 0.5, 0.75]),
                          std=np.array([0.2, 0.2, 0.2]))
        img = np.stack(
            [np.full((4, 4), m) for m in (0.25, 0.5, 0.75)]).astype(np.float32)
        assert not normalize(img, stats).any()

    def test_zero_mean_unit_std_is_identity(self, rng):
        img = random_image(rng)
        stats = NormStats(mean=np.zeros(3), std=np.ones(3))
        np.testing.assert_allclose(normalize(img, stats), img, atol=1e-7)

    def test_std_must_be_positive(self):
        with pytest.raises(ConfigError):
            NormStats(mean=np.zeros(3), std=np.zeros(3))


class TestNormStatsComputation:
    def test_two_pass_oracle(self, rng):
        images = [random_image(rng, h=9, w=9) for _ in range(5)]
        stats = norm_stats_from_images(images, 9)
        pixels = np.concatenate([im.reshape(3, -1) for im in images], axis=1)
        np.testing.assert_allclose(stats.mean, pixels.mean(axis=1), atol=1e-5)
        np.testing.assert_allclose(stats.std, pixels.std(axis=1), atol=1e-5)

    def test_all_black_floors_std(self):
        images = [np.zeros((3, 8, 8), dtype=np.float32)]
        stats = norm_stats_from_images(images, 8)
        np.testing.assert_array_equal(stats.mean, np.zeros(3))
        np.testing.assert_array_equal(stats.std, np.full(3, 1e-6))

    def test_constant_half_images(self):
        images = [np.full((3, 8, 8), 0.5, dtype=np.float32)] * 3
        stats = norm_stats_from_images(images, 8)
        np.testing.assert_allclose(stats.mean, 0.5, atol=1e-7)
        np.testing.assert_array_equal(stats.std, np.full(3, 1e-6))

    def test_normalizing_with_own_stats_whitens(self, rng):
        images = [random_image(rng, h=10, w=10) for _ in range(8)]
        stats = norm_stats_from_images(images, 10)
        normed = np.concatenate(
            [normalize(im, stats).reshape(3, -1) for im in images], axis=1)
        np.testing.assert_allclose(normed.mean(axis=1), 0.0, atol=1e-3)
        np.testing.assert_allclose(normed.std(axis=1), 1.0, atol=1e-3)
