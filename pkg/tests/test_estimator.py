import numpy as np
import pytest

from vitray.errors import DataError, NotFittedError, ShapeError
from vitray.estimator import VisionTransformerClassifier
from vitray.tensor import make_rng


def halves_dataset(n_per_class=12, size=16, seed=0, labels=(0, 1)):
    """Class A lights the left half, class B the right; trivially separable."""
    rng = make_rng(seed)
    X, y = [], []
    for label, side in zip(labels, ("left", "right")):
        for _ in range(n_per_class):
            img = rng.normal(-0.6, 0.08, (size, size))
            half = slice(0, size // 2) if side == "left" else slice(size // 2, size)
            img[:, half] += 1.2
            X.append(img)
            y.append(label)
    return np.array(X), np.array(y)


def small_clf(**overrides):
    params = dict(image_size=16, patch_size=8, hidden_size=16, intermediate_size=32,
                  num_layers=1, num_heads=2, learning_rate=3e-3, epochs=20,
                  batch_size=8, seed=0)
    params.update(overrides)
    return VisionTransformerClassifier(**params)


class TestParamProtocol:
    def test_get_params_covers_every_init_arg(self):
        clf = VisionTransformerClassifier()
        import inspect
        init_args = [n for n in inspect.signature(VisionTransformerClassifier.__init__).parameters
                     if n != "self"]
        assert sorted(clf.get_params()) == sorted(init_args)

    def test_set_params_round_trip(self):
        clf = VisionTransformerClassifier()
        clf.set_params(epochs=3, hidden_size=32)
        assert clf.get_params()["epochs"] == 3
        assert clf.get_params()["hidden_size"] == 32

    def test_invalid_param_raises_value_error(self):
        with pytest.raises(ValueError, match="invalid parameter"):
            VisionTransformerClassifier().set_params(warp=1)

    def test_clone_by_reconstruction(self):
        clf = small_clf(epochs=4)
        clone = VisionTransformerClassifier(**clf.get_params())
        assert clone.get_params() == clf.get_params()
        assert not hasattr(clone, "model_")

    def test_repr_shows_non_defaults(self):
        clf = VisionTransformerClassifier(epochs=3)
        assert repr(clf) == "VisionTransformerClassifier(epochs=3)"


class TestFitPredict:
    def test_learns_separable_data(self):
        X, y = halves_dataset()
        clf = small_clf().fit(X, y)
        assert clf.score(X, y) == 1.0
        assert len(clf.loss_curve_) == clf.epochs
        assert clf.loss_curve_[-1] < clf.loss_curve_[0]

    def test_class_labels_pass_through(self):
        X, y = halves_dataset(labels=(3, 7))
        clf = small_clf().fit(X, y)
        assert np.array_equal(clf.classes_, [3, 7])
        assert set(np.unique(clf.predict(X))) <= {3, 7}

    def test_predict_proba_rows_normalized(self):
        X, y = halves_dataset(n_per_class=4)
        clf = small_clf(epochs=1).fit(X, y)
        probs = clf.predict_proba(X)
        assert probs.shape == (len(X), 2)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_decision_function_returns_logits(self):
        X, y = halves_dataset(n_per_class=4)
        clf = small_clf(epochs=1).fit(X, y)
        logits = clf.decision_function(X)
        assert logits.shape == (len(X), 2)

    def test_same_seed_is_deterministic(self):
        X, y = halves_dataset(n_per_class=5)
        a = small_clf(epochs=2).fit(X, y).predict_proba(X)
        b = small_clf(epochs=2).fit(X, y).predict_proba(X)
        assert np.array_equal(a, b)

    def test_uint8_input_accepted(self):
        X, y = halves_dataset(n_per_class=4)
        X8 = np.clip((X * 0.5 + 0.5) * 255, 0, 255).astype(np.uint8)
        clf = small_clf(epochs=1).fit(X8, y)
        assert clf.predict(X8).shape == (len(X8),)


class TestValidationHelpers:
    def test_uint8_maps_to_unit_interval(self):
        from vitray.validation import check_images
        X = np.array([[[0, 255], [128, 64]]], dtype=np.uint8)
        out = check_images(X, image_size=2, in_channels=1)
        assert out.shape == (1, 1, 2, 2)
        assert out[0, 0, 0, 0] == -1.0 and out[0, 0, 0, 1] == 1.0

    def test_grayscale_replicated_to_channels(self):
        from vitray.validation import check_images
        X = make_rng(0).random((2, 4, 4))
        out = check_images(X, image_size=4, in_channels=3)
        assert out.shape == (2, 3, 4, 4)
        assert np.array_equal(out[:, 0], out[:, 2])

    def test_non_finite_rejected(self):
        from vitray.validation import check_images
        X = np.full((1, 4, 4), np.nan)
        with pytest.raises(DataError):
            check_images(X, image_size=4, in_channels=1)

    def test_channel_mismatch(self):
        from vitray.validation import check_images
        with pytest.raises(ShapeError):
            check_images(np.zeros((1, 2, 4, 4)), image_size=4, in_channels=3)

    def test_label_checks(self):
        from vitray.validation import check_labels
        assert np.array_equal(check_labels([1, 0, 1], 3), [1, 0, 1])
        with pytest.raises(ShapeError):
            check_labels(np.zeros((2, 2)), 4)


class TestValidation:
    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            VisionTransformerClassifier().predict(np.zeros((1, 32, 32)))

    def test_wrong_image_size(self):
        X, y = halves_dataset(n_per_class=3, size=16)
        clf = small_clf(image_size=32)
        with pytest.raises(ShapeError):
            clf.fit(X, y)

    def test_label_length_mismatch(self):
        X, _ = halves_dataset(n_per_class=3)
        with pytest.raises(DataError):
            small_clf().fit(X, np.zeros(2))

    def test_single_class_rejected(self):
        X, _ = halves_dataset(n_per_class=3)
        with pytest.raises(DataError):
            small_clf().fit(X, np.zeros(len(X)))

    def test_channel_replication_for_three_channel_model(self):
        X, y = halves_dataset(n_per_class=3)
        clf = small_clf(in_channels=3, epochs=1).fit(X, y)
        assert clf.model_.config.in_channels == 3
