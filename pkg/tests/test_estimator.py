"""Scikit-learn estimator facade: API contract and learning behavior."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from lungnet.estimator import LungNetClassifier, check_image_batch
from lungnet.synthetic import make_image
from lungnet.rng import make_rng


def small_image_set(n_per_class=12, size=48, seed=0):
    """In-memory images from the synthetic pattern families."""
    images, labels = [], []
    for class_id in range(3):
        for i in range(n_per_class):
            rng = make_rng(seed * 1000 + class_id * 100 + i)
            img = make_image(class_id, size, rng).astype(np.float32) / 255.0
            images.append(np.repeat(img, 3, axis=0))
            labels.append(class_id)
    return np.stack(images), np.array(labels)


def fast_estimator(**overrides):
    """Desk-scale settings; batch/val sizes chosen so batchnorm statistics
    stay healthy on a small set."""
    params = dict(arch="mobilenet_lung", width_multiplier=0.25, input_size=48,
                  batch_size=24, max_epochs=3, lr0=0.01, patience=10,
                  validation_fraction=0.15, random_state=0)
    params.update(overrides)
    return LungNetClassifier(**params)


class TestSklearnContract:
    def test_get_set_params_round_trip(self):
        est = fast_estimator()
        params = est.get_params()
        assert params["arch"] == "mobilenet_lung"
        assert params["lr0"] == 0.01
        est.set_params(lr0=0.5, max_epochs=7)
        assert est.lr0 == 0.5 and est.max_epochs == 7

    def test_clone_preserves_params(self):
        est = fast_estimator(max_epochs=5)
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()

    def test_predict_before_fit_raises(self):
        X, _ = small_image_set(2)
        with pytest.raises(NotFittedError):
            fast_estimator().predict(X)

    def test_input_validation(self):
        est = fast_estimator()
        with pytest.raises(ValueError, match="rank"):
            check_image_batch(np.zeros((4, 32, 32), dtype=np.float32))
        with pytest.raises(ValueError, match="channels"):
            check_image_batch(np.zeros((4, 1, 32, 32), dtype=np.float32))
        with pytest.raises(ValueError, match="finite"):
            check_image_batch(np.full((1, 3, 8, 8), np.nan, dtype=np.float32))
        X, y = small_image_set(4)
        with pytest.raises(ValueError, match="labels"):
            est.fit(X, y[:-1])

    def test_unknown_arch_rejected(self):
        X, y = small_image_set(4)
        with pytest.raises(ValueError, match="arch"):
            fast_estimator(arch="alexnet").fit(X, y)


@pytest.fixture(scope="module")
def fitted():
    X, y = small_image_set(40)
    est = fast_estimator(max_epochs=15)
    return est, est.fit(X, y), X, y


class TestFitPredict:
    def test_fit_returns_self_and_sets_attributes(self, fitted):
        est, ret, X, y = fitted
        assert ret is est
        np.testing.assert_array_equal(est.classes_, [0, 1, 2])
        assert est.best_epoch_ >= 0
        assert len(est.training_log_.rows) <= 15

    def test_predict_shapes_and_label_space(self, fitted):
        est, _, X, y = fitted
        preds = est.predict(X)
        assert preds.shape == y.shape
        assert set(np.unique(preds)) <= {0, 1, 2}

    def test_predict_proba_rows_sum_to_one(self, fitted):
        est, _, X, _ = fitted
        proba = est.predict_proba(X)
        assert proba.shape == (len(X), 3)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-6)
        assert np.all(proba > 0)

    def test_score_is_strong_on_training_data(self, fitted):
        est, _, X, y = fitted
        assert est.score(X, y) > 0.9

    def test_predictions_deterministic(self, fitted):
        est, _, X, _ = fitted
        np.testing.assert_array_equal(est.predict(X), est.predict(X))

    def test_label_values_round_trip_through_classes(self):
        X, y = small_image_set(6)
        est = fast_estimator(max_epochs=2).fit(X, y + 10)  # labels 10/11/12
        np.testing.assert_array_equal(est.classes_, [10, 11, 12])
        assert set(np.unique(est.predict(X))) <= {10, 11, 12}

    def test_same_random_state_reproduces_fit(self):
        X, y = small_image_set(6)
        a = fast_estimator(max_epochs=2).fit(X, y)
        b = fast_estimator(max_epochs=2).fit(X, y)
        np.testing.assert_array_equal(a.predict_proba(X), b.predict_proba(X))
