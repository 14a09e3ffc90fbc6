"""Synthetic three-class dataset for desk-scale verification.

Each class has a distinct texture family so the classes are separable by
construction (even a nearest-class-mean probe on raw pixels tells them
apart), while per-image jitter in brightness, phase, and noise keeps the
task non-trivial:

    normal    - smooth vertical brightness gradient
    opacity   - horizontal bars (sinusoidal stripes with random phase)
    pneumonia - bright centered blob on a dark field

Images are written as single-channel NNIM files in the class-per-directory
layout, deterministically from (seed, class, image index).
"""

import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .imageio import write_nnim
from .rng import TAG_SYNTH, derive_rng

CLASS_NAMES = ("normal", "opacity", "pneumonia")


@dataclass
class SyntheticSpec:
    per_class: int = 130
    size: int = 72
    seed: int = 0

    def __post_init__(self):
        if self.per_class < 1:
            raise ConfigError(f"per_class must be >= 1, got {self.per_class}")
        if self.size < 16:
            raise ConfigError(f"size must be >= 16, got {self.size}")


def _noise(rng, size, scale=6.0):
    return rng.standard_normal((size, size)) * scale


def make_image(class_id, size, rng):
    """One (1, S, S) uint8 image from the class's pattern family."""
    s = size
    if class_id == 0:
        base = np.linspace(60.0, 190.0, s)[:, None] + rng.uniform(-20, 20)
        img = base + _noise(rng, s)
    elif class_id == 1:
        period = rng.uniform(9.0, 13.0)
        phase = rng.uniform(0.0, period)
        rows = np.arange(s, dtype=np.float64)[:, None]
        img = 125.0 + 85.0 * np.sin(2 * np.pi * (rows + phase) / period)
        img = img + _noise(rng, s)
    elif class_id == 2:
        cy = (s - 1) / 2 + rng.uniform(-s / 16, s / 16)
        cx = (s - 1) / 2 + rng.uniform(-s / 16, s / 16)
        sigma = s / 5 * rng.uniform(0.9, 1.1)
        yy, xx = np.meshgrid(np.arange(s), np.arange(s), indexing="ij")
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        img = 35.0 + 175.0 * np.exp(-d2 / (2 * sigma ** 2)) + _noise(rng, s)
    else:
        raise ConfigError(f"unknown synthetic class id {class_id}")
    return np.clip(img, 0, 255).astype(np.uint8)[None, :, :]


def generate_dataset(spec, out_dir):
    """Write the class-per-directory NNIM tree; returns per-class file counts."""
    counts = {}
    for class_id, name in enumerate(CLASS_NAMES):
        class_dir = os.path.join(str(out_dir), name)
        os.makedirs(class_dir, exist_ok=True)
        for i in range(spec.per_class):
            rng = derive_rng(spec.seed, TAG_SYNTH, class_id, i)
            img = make_image(class_id, spec.size, rng)
            write_nnim(os.path.join(class_dir, f"img_{i:04d}.nnim"), img)
        counts[name] = spec.per_class
    return counts
