"""Pixel-space transforms: flips, small rotations, bilinear resize,
normalization, and the seeded training augmentation chain.

The training chain applies, in a fixed order so seeds reproduce exactly:
horizontal flip (p=0.5), vertical flip (p=0.5), rotation by a uniform angle
in [-max_deg, +max_deg] with bilinear sampling and zero fill, then bilinear
resize to the target size.  The evaluation path is resize + normalize only.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, ShapeError

STD_FLOOR = 1e-6


@dataclass
class AugmentConfig:
    hflip_prob: float = 0.5
    vflip_prob: float = 0.5
    max_rotation_deg: float = 10.0
    target_size: int = 224

    def __post_init__(self):
        for name in ("hflip_prob", "vflip_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.max_rotation_deg < 0:
            raise ConfigError(
                f"max_rotation_deg must be >= 0, got {self.max_rotation_deg}")
        if self.target_size < 1:
            raise ConfigError(f"target_size must be >= 1, got {self.target_size}")


@dataclass
class NormStats:
    """Per-channel normalization statistics (population std, floored)."""
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape:
            raise ConfigError("normalization mean/std shapes differ")
        if np.any(self.std <= 0):
            raise ConfigError("normalization std must be positive per channel")


def _check_chw(img):
    if img.ndim != 3:
        raise ShapeError(f"expected (C, H, W) image, got rank {img.ndim}")


def hflip(img):
    """Mirror along the width axis."""
    _check_chw(img)
    return img[:, :, ::-1].copy()


def vflip(img):
    """Mirror along the height axis."""
    _check_chw(img)
    return img[:, ::-1, :].copy()


def rotate(img, degrees):
    """Rotate about the image center, bilinear sampling, zero fill outside.

    Positive angles turn the pixel grid like ``np.rot90(k=-1)`` does at 90
    degrees; the training chain draws symmetric angles so the sign convention
    never matters there.
    """
    _check_chw(img)
    if degrees == 0.0:
        return img.copy()
    _, h, w = img.shape
    theta = math.radians(degrees)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    xr, yr = xx - cx, yy - cy
    xs = cos_t * xr + sin_t * yr + cx
    ys = -sin_t * xr + cos_t * yr + cy

    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    wx = xs - x0
    wy = ys - y0

    out = np.zeros_like(img, dtype=np.float64)
    for dy, dx, weight in ((0, 0, (1 - wy) * (1 - wx)), (0, 1, (1 - wy) * wx),
                           (1, 0, wy * (1 - wx)), (1, 1, wy * wx)):
        yi, xi = y0 + dy, x0 + dx
        valid = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
        yc, xc = yi.clip(0, h - 1), xi.clip(0, w - 1)
        out += weight * valid * img[:, yc, xc]
    return out.astype(img.dtype)


def resize(img, size):
    """Bilinear resize to (C, size, size) with half-pixel centers."""
    _check_chw(img)
    _, h, w = img.shape
    if (h, w) == (size, size):
        return img.copy()
    ys = (np.arange(size, dtype=np.float64) + 0.5) * (h / size) - 0.5
    xs = (np.arange(size, dtype=np.float64) + 0.5) * (w / size) - 0.5
    ys = ys.clip(0, h - 1)
    xs = xs.clip(0, w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]

    top = img[:, y0[:, None], x0[None, :]] * (1 - wx) + img[:, y0[:, None], x1[None, :]] * wx
    bot = img[:, y1[:, None], x0[None, :]] * (1 - wx) + img[:, y1[:, None], x1[None, :]] * wx
    return ((1 - wy) * top + wy * bot).astype(img.dtype)


def augment(img, cfg, rng):
    """Seeded training augmentation; identical rng state gives identical output.

    The rotation angle is always drawn, even when it cannot change the image,
    so the consumed rng stream does not depend on the configuration.
    """
    _check_chw(img)
    out = img
    if rng.random() < cfg.hflip_prob:
        out = hflip(out)
    if rng.random() < cfg.vflip_prob:
        out = vflip(out)
    angle = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg)
    if angle != 0.0:
        out = rotate(out, angle)
    return resize(out, cfg.target_size)


def normalize(img, stats):
    """(img - mean) / std per channel; returns float32."""
    _check_chw(img)
    if img.shape[0] != stats.mean.shape[0]:
        raise ShapeError(
            f"normalize channel mismatch: image has {img.shape[0]}, "
            f"stats have {stats.mean.shape[0]}")
    out = (img - stats.mean[:, None, None]) / stats.std[:, None, None]
    return out.astype(np.float32)


class _StatsAccumulator:
    """One-pass per-channel mean/std in float64."""

    def __init__(self, channels=3):
        self.total = np.zeros(channels, dtype=np.float64)
        self.total_sq = np.zeros(channels, dtype=np.float64)
        self.count = 0

    def add(self, img):
        self.total += img.sum(axis=(1, 2), dtype=np.float64)
        self.total_sq += np.square(img, dtype=np.float64).sum(axis=(1, 2))
        self.count += img.shape[1] * img.shape[2]

    def finish(self):
        if self.count == 0:
            raise DataError("cannot compute normalization stats over zero pixels")
        mean = self.total / self.count
        var = np.maximum(self.total_sq / self.count - mean ** 2, 0.0)
        return NormStats(mean=mean, std=np.maximum(np.sqrt(var), STD_FLOOR))


def norm_stats_from_images(images, target_size):
    """NormStats over an iterable of (C, H, W) images, resized first."""
    acc = _StatsAccumulator()
    for img in images:
        acc.add(resize(img, target_size))
    return acc.finish()
