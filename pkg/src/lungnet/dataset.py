"""Dataset ingestion, stratified splitting, and batch sources.

The on-disk layout is one directory per class: ``root/<ClassName>/*.{png,
jpg,jpeg,nnim}``.  Scanning is deterministic (class names then file names,
lexicographic) and labels follow sorted class-name order.  The 80/10/10
split is stratified per class: floor(ratio*n) samples go to val and to test,
the remainder to train, so the validation and test splits stay balanced and
train keeps every leftover sample.

A split index round-trips through CSV (``path,label,split``, LF endings) so
any downstream tool can consume it.
"""

import csv
import logging
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DataError
from .imageio import IMAGE_EXTENSIONS, decode_image
from .rng import TAG_AUGMENT, TAG_SPLIT, derive_rng
from .transforms import augment, norm_stats_from_images, normalize, resize

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
DEFAULT_RATIOS = (0.8, 0.1, 0.1)


@dataclass(frozen=True)
class IndexEntry:
    path: str
    label: int
    split: str = ""


@dataclass
class DatasetIndex:
    entries: list
    class_names: list
    skipped: int = 0

    def for_split(self, split):
        return [e for e in self.entries if e.split == split]

    def counts(self):
        """{class_name: {split: count}} over tagged entries."""
        table = {name: dict.fromkeys(SPLITS, 0) for name in self.class_names}
        for e in self.entries:
            if e.split:
                table[self.class_names[e.label]][e.split] += 1
        return table


def scan_dataset(root):
    """Build an unsplit index from a class-per-directory tree."""
    root = str(root)
    if not os.path.isdir(root):
        raise DataError(f"dataset root is not a directory: {root}")
    class_names = sorted(
        d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d)))
    if not class_names:
        raise DataError(f"dataset root has no class directories: {root}")
    entries = []
    skipped = 0
    for label, name in enumerate(class_names):
        class_dir = os.path.join(root, name)
        files = sorted(
            f for f in os.listdir(class_dir)
            if os.path.isfile(os.path.join(class_dir, f))
            and f.lower().endswith(IMAGE_EXTENSIONS))
        if not files:
            raise DataError(f"class directory has no images: {class_dir}")
        for f in files:
            path = os.path.join(class_dir, f)
            if not os.access(path, os.R_OK):
                skipped += 1
                log.warning("skipping unreadable file: %s", path)
                continue
            entries.append(IndexEntry(path=path, label=label))
    if not entries:
        raise DataError(f"no readable images under {root}")
    return DatasetIndex(entries=entries, class_names=class_names, skipped=skipped)


def split_sizes(n, ratios=DEFAULT_RATIOS):
    """(train, val, test) counts for one class of size n under the floor rule."""
    n_val = math.floor(ratios[1] * n)
    n_test = math.floor(ratios[2] * n)
    return n - n_val - n_test, n_val, n_test


def stratified_split(index, ratios=DEFAULT_RATIOS, seed=0):
    """Assign split tags per class with a seeded shuffle.

    Entry order is preserved; only the tags change, so the same seed always
    yields the identical index and different seeds keep identical counts.
    """
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must be three values summing to 1, got {ratios}")
    rng = derive_rng(seed, TAG_SPLIT)
    tags = [""] * len(index.entries)
    for label in range(len(index.class_names)):
        ids = [i for i, e in enumerate(index.entries) if e.label == label]
        if len(ids) < 3:
            raise DataError(
                f"class {index.class_names[label]!r} has {len(ids)} samples; "
                f"at least 3 are required to split")
        _, n_val, n_test = split_sizes(len(ids), ratios)
        order = rng.permutation(len(ids))
        for pos, j in enumerate(order):
            if pos < n_val:
                tags[ids[j]] = "val"
            elif pos < n_val + n_test:
                tags[ids[j]] = "test"
            else:
                tags[ids[j]] = "train"
    entries = [replace(e, split=tags[i]) for i, e in enumerate(index.entries)]
    return DatasetIndex(entries=entries, class_names=list(index.class_names),
                        skipped=index.skipped)


def write_index_csv(index, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["path", "label", "split"])
        for e in index.entries:
            writer.writerow([e.path, e.label, e.split])


def read_index_csv(path):
    """Load a split index; class names are recovered from parent directories."""
    entries = []
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["path", "label", "split"]:
            raise DataError(f"bad index header in {path}: {header}")
        for row in reader:
            if len(row) != 3:
                raise DataError(f"bad index row in {path}: {row}")
            p, label, split = row
            if split not in ("",) + SPLITS:
                raise DataError(f"unknown split tag {split!r} in {path}")
            entries.append(IndexEntry(path=p, label=int(label), split=split))
    if not entries:
        raise DataError(f"index is empty: {path}")
    names = {}
    for e in entries:
        name = os.path.basename(os.path.dirname(e.path))
        if names.setdefault(e.label, name) != name:
            raise DataError(
                f"label {e.label} maps to both {names[e.label]!r} and {name!r}")
    labels = sorted(names)
    if labels != list(range(len(labels))):
        raise DataError(f"labels are not contiguous from 0: {labels}")
    return DatasetIndex(entries=entries, class_names=[names[l] for l in labels])


def compute_norm_stats(index, target_size):
    """Per-channel mean/std over all train-split pixels after resizing."""
    train = index.for_split("train")
    if not train:
        raise DataError("cannot compute normalization stats: train split is empty")
    return norm_stats_from_images(
        (decode_image(e.path) for e in train), target_size)


class ImageFolderSource:
    """Batched, normalized samples from one split of an on-disk index.

    With an AugmentConfig each sample is augmented under an rng stream derived
    from (seed, epoch, dataset position), so batches are reproducible and
    independent of iteration order; without one the eval path (resize +
    normalize) is applied.  Decoded raw images are cached in memory, which is
    the right trade at desk scale.
    """

    def __init__(self, index, split, stats, input_size, augment_cfg=None,
                 seed=0, cache=True):
        self.entries = index.for_split(split)
        if not self.entries:
            raise DataError(f"split {split!r} is empty")
        self.class_names = list(index.class_names)
        self.stats = stats
        self.input_size = input_size
        self.augment_cfg = augment_cfg
        self.seed = seed
        self._cache = {} if cache else None
        self.labels = np.array([e.label for e in self.entries], dtype=np.int64)

    def __len__(self):
        return len(self.entries)

    def _raw(self, i):
        if self._cache is not None and i in self._cache:
            return self._cache[i]
        img = decode_image(self.entries[i].path)
        if self._cache is not None:
            self._cache[i] = img
        return img

    def batch(self, ids, epoch=0):
        imgs = []
        for i in ids:
            raw = self._raw(int(i))
            if self.augment_cfg is not None:
                rng = derive_rng(self.seed, TAG_AUGMENT, epoch, int(i))
                img = augment(raw, self.augment_cfg, rng)
            else:
                img = resize(raw, self.input_size)
            imgs.append(normalize(img, self.stats))
        return np.stack(imgs), self.labels[list(ids)]


class ArraySource:
    """Same batching protocol over in-memory (N, 3, H, W) images in [0, 1]."""

    def __init__(self, images, labels, stats, input_size, augment_cfg=None, seed=0):
        if len(images) != len(labels):
            raise DataError(
                f"images/labels length mismatch: {len(images)} vs {len(labels)}")
        if len(images) == 0:
            raise DataError("array source is empty")
        self.images = images
        self.labels = np.asarray(labels, dtype=np.int64)
        self.stats = stats
        self.input_size = input_size
        self.augment_cfg = augment_cfg
        self.seed = seed

    def __len__(self):
        return len(self.images)

    def batch(self, ids, epoch=0):
        imgs = []
        for i in ids:
            raw = self.images[int(i)]
            if self.augment_cfg is not None:
                rng = derive_rng(self.seed, TAG_AUGMENT, epoch, int(i))
                img = augment(raw, self.augment_cfg, rng)
            else:
                img = resize(raw, self.input_size)
            imgs.append(normalize(img, self.stats))
        return np.stack(imgs), self.labels[list(ids)]
