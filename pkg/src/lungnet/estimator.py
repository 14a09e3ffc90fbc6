"""Scikit-learn style estimator wrapping the full training recipe.

``LungNetClassifier`` takes in-memory image batches (N, 3, H, W) scaled to
[0, 1], carves off a stratified validation fraction, computes normalization
statistics on the training portion only, trains the selected architecture
under the standard recipe (momentum SGD, step LR decay, early stopping,
best-by-validation-accuracy checkpointing), and serves predictions from the
best weights.  Because it subclasses ``BaseEstimator``/``ClassifierMixin``
it composes with the wider scikit-learn ecosystem (``get_params``,
``set_params``, ``clone``, ``score``).
"""

import math
import tempfile

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .checkpoint import load_weights
from .dataset import ArraySource
from .models import ARCHITECTURES, ARCH_MOBILENET_LUNG, ModelConfig, build_model
from .rng import TAG_SPLIT, derive_rng
from .training import TrainConfig, evaluate, softmax, train_loop
from .transforms import (AugmentConfig, norm_stats_from_images, normalize,
                         resize)


def check_image_batch(X):
    """Validate and convert a batch of images to float32 (N, 3, H, W)."""
    X = np.asarray(X)
    if X.ndim != 4:
        raise ValueError(
            f"expected images of shape (N, 3, H, W), got rank {X.ndim}")
    if X.shape[1] != 3:
        raise ValueError(f"expected 3 channels on axis 1, got {X.shape[1]}")
    if X.shape[0] == 0:
        raise ValueError("empty image batch")
    X = X.astype(np.float32, copy=False)
    if not np.all(np.isfinite(X)):
        raise ValueError("images contain non-finite values")
    return X


def check_labels(y, n_samples):
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_samples:
        raise ValueError(
            f"expected {n_samples} labels in a 1-D array, got shape {y.shape}")
    return y


class LungNetClassifier(BaseEstimator, ClassifierMixin):
    """Image classifier with a fit/predict surface over the CNN trainer.

    Parameters mirror the underlying model and training configs; see
    ``ModelConfig`` and ``TrainConfig``.  ``arch`` selects ``mobilenet_v2``
    or ``mobilenet_lung`` (the SE-attention variant, the default).
    """

    def __init__(self, arch=ARCH_MOBILENET_LUNG, width_multiplier=1.0,
                 input_size=224, se_reduction=16, dropout_rate=0.2,
                 lr0=0.01, momentum=0.9, lr_step=10, lr_gamma=0.1,
                 patience=10, batch_size=32, max_epochs=100,
                 validation_fraction=0.1, augment=True,
                 max_rotation_deg=10.0, random_state=0):
        self.arch = arch
        self.width_multiplier = width_multiplier
        self.input_size = input_size
        self.se_reduction = se_reduction
        self.dropout_rate = dropout_rate
        self.lr0 = lr0
        self.momentum = momentum
        self.lr_step = lr_step
        self.lr_gamma = lr_gamma
        self.patience = patience
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.validation_fraction = validation_fraction
        self.augment = augment
        self.max_rotation_deg = max_rotation_deg
        self.random_state = random_state

    def _validation_split(self, y_idx):
        """Stratified (train_ids, val_ids); falls back to train=val when the
        fraction rounds to zero samples."""
        rng = derive_rng(self.random_state, TAG_SPLIT)
        train_ids, val_ids = [], []
        for label in range(y_idx.max() + 1):
            ids = np.flatnonzero(y_idx == label)
            n_val = math.floor(self.validation_fraction * len(ids))
            order = rng.permutation(len(ids))
            val_ids.extend(ids[order[:n_val]])
            train_ids.extend(ids[order[n_val:]])
        if not val_ids:
            val_ids = list(train_ids)
        return np.sort(train_ids), np.sort(val_ids)

    def fit(self, X, y):
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"arch must be one of {ARCHITECTURES}, got {self.arch!r}")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")
        X = check_image_batch(X)
        y = check_labels(y, X.shape[0])
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least 2 classes to fit")

        train_ids, val_ids = self._validation_split(y_idx)
        stats = norm_stats_from_images(
            (X[i] for i in train_ids), self.input_size)

        aug = AugmentConfig(max_rotation_deg=self.max_rotation_deg,
                            target_size=self.input_size) if self.augment else None
        train_src = ArraySource(X[train_ids], y_idx[train_ids], stats,
                                self.input_size, augment_cfg=aug,
                                seed=self.random_state)
        val_src = ArraySource(X[val_ids], y_idx[val_ids], stats, self.input_size)

        config = ModelConfig(num_classes=len(self.classes_),
                             width_multiplier=self.width_multiplier,
                             input_size=self.input_size,
                             se_after_stem=self.arch == ARCH_MOBILENET_LUNG,
                             se_reduction=self.se_reduction,
                             dropout_rate=self.dropout_rate)
        model = build_model(self.arch, config, seed=self.random_state)
        cfg = TrainConfig(lr0=self.lr0, momentum=self.momentum,
                          lr_step=self.lr_step, lr_gamma=self.lr_gamma,
                          patience=self.patience, batch_size=self.batch_size,
                          max_epochs=self.max_epochs, seed=self.random_state)
        with tempfile.TemporaryDirectory() as tmp:
            log, best = train_loop(model, train_src, val_src, cfg, out_dir=tmp)
            if best is not None:
                load_weights(model, best, strict=True)

        self.model_ = model
        self.norm_stats_ = stats
        self.training_log_ = log
        self.best_epoch_ = log.best_epoch
        if log.rows:
            _, report = evaluate(model, val_src, batch_size=self.batch_size)
            self.validation_report_ = report
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(
                "this LungNetClassifier is not fitted yet; call fit first")

    def decision_function(self, X):
        """Raw logits from the best model, shape (N, n_classes)."""
        self._check_fitted()
        X = check_image_batch(X)
        out = []
        for start in range(0, X.shape[0], self.batch_size):
            chunk = X[start:start + self.batch_size]
            batch = np.stack([
                normalize(resize(img, self.input_size), self.norm_stats_)
                for img in chunk])
            out.append(self.model_.forward(batch, training=False))
        return np.concatenate(out, axis=0)

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        self._check_fitted()
        return self.classes_[self.decision_function(X).argmax(axis=1)]
