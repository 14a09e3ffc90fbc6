"""Deterministic random-stream management.

Every source of randomness in the package is a numpy Generator derived from
a 64-bit base seed plus integer stream tags, so a run is fully reproducible
from its seed and no two subsystems ever share a stream.  Per-sample
augmentation streams are keyed by (seed, tag, epoch, sample index), which
makes results independent of batch composition and iteration order.
"""

import numpy as np

# Stream tags: one namespace per consumer of randomness.
TAG_INIT = 0
TAG_SHUFFLE = 1
TAG_AUGMENT = 2
TAG_DROPOUT = 3
TAG_SPLIT = 4
TAG_SYNTH = 5
TAG_CHECK = 6


def make_rng(seed):
    """Generator seeded directly from a single integer."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def derive_rng(seed, *keys):
    """Generator for the stream identified by (seed, *keys).

    Identical arguments always produce the identical stream; distinct key
    tuples produce statistically independent streams.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) & 0xFFFFFFFFFFFFFFFF for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
