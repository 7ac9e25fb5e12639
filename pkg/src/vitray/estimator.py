"""Array-facing classifier with the scikit-learn estimator protocol.

``VisionTransformerClassifier`` wraps the training engine behind
``fit`` / ``predict`` / ``predict_proba`` / ``score`` plus
``get_params`` / ``set_params``, so it drops into pipelines,
cross-validation loops, and anything else that clones estimators by
reconstructing them from their parameters. No scikit-learn import is
required; the protocol is duck-typed.

>>> clf = VisionTransformerClassifier(image_size=32, epochs=5, seed=0)
>>> clf.fit(X_train, y_train).score(X_test, y_test)
"""

from __future__ import annotations

import inspect

import numpy as np

from .errors import DataError, NotFittedError
from .model import ViTConfig, ViTModel
from .optim import AdamW, CosineSchedule
from .tensor import Tensor, derive_rng
from .train import predict_scores, train_one_epoch
from .validation import check_images, check_labels

_INIT, _SHUFFLE, _DROPOUT = 0, 1, 2  # rng stream tags, shared with the harness


class VisionTransformerClassifier:
    """Desk-scale Vision Transformer classifier over image arrays.

    Defaults describe a small model that trains in seconds on toy data;
    scale the architecture arguments up for real experiments.
    """

    def __init__(self, image_size: int = 32, patch_size: int = 8, in_channels: int = 1,
                 hidden_size: int = 64, intermediate_size: int = 128, num_layers: int = 2,
                 num_heads: int = 4, attn_dropout: float = 0.0, hidden_dropout: float = 0.0,
                 ln_eps: float = 1e-12, freeze_encoder: bool = False,
                 learning_rate: float = 1e-4, min_learning_rate: float = 0.0,
                 weight_decay: float = 0.01, batch_size: int = 32, epochs: int = 10,
                 seed: int = 0):
        self.image_size = image_size
        self.patch_size = patch_size
        self.in_channels = in_channels
        self.hidden_size = hidden_size
        self.intermediate_size = intermediate_size
        self.num_layers = num_layers
        self.num_heads = num_heads
        self.attn_dropout = attn_dropout
        self.hidden_dropout = hidden_dropout
        self.ln_eps = ln_eps
        self.freeze_encoder = freeze_encoder
        self.learning_rate = learning_rate
        self.min_learning_rate = min_learning_rate
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed

    # -- scikit-learn parameter protocol --

    @classmethod
    def _param_names(cls) -> list[str]:
        return [name for name in inspect.signature(cls.__init__).parameters if name != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params) -> "VisionTransformerClassifier":
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                # ValueError by sklearn convention, so ecosystem tooling recognizes it
                raise ValueError(f"invalid parameter {name!r} for {type(self).__name__}")
            setattr(self, name, value)
        return self

    def __repr__(self) -> str:
        defaults = {n: p.default for n, p in inspect.signature(type(self).__init__).parameters.items()}
        shown = {n: v for n, v in self.get_params().items() if v != defaults.get(n)}
        inner = ", ".join(f"{k}={v!r}" for k, v in shown.items())
        return f"{type(self).__name__}({inner})"

    # -- estimator surface --

    def _config(self, num_classes: int) -> ViTConfig:
        return ViTConfig(
            image_size=self.image_size, patch_size=self.patch_size,
            in_channels=self.in_channels, hidden_size=self.hidden_size,
            intermediate_size=self.intermediate_size, num_layers=self.num_layers,
            num_heads=self.num_heads, num_classes=num_classes,
            attn_dropout=self.attn_dropout, hidden_dropout=self.hidden_dropout,
            ln_eps=self.ln_eps, freeze_encoder=self.freeze_encoder,
        )

    def fit(self, X, y) -> "VisionTransformerClassifier":
        X = check_images(X, self.image_size, self.in_channels)
        y = check_labels(y, len(X))
        self.classes_, y_indices = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise DataError("fit needs at least two distinct classes")

        self.model_ = ViTModel(self._config(len(self.classes_)),
                               rng=derive_rng(self.seed, _INIT))
        optimizer = AdamW(self.model_.trainable_parameters(),
                          lr=self.learning_rate, weight_decay=self.weight_decay)
        schedule = CosineSchedule(eta_max=self.learning_rate,
                                  eta_min=self.min_learning_rate,
                                  t_max=max(self.epochs, 1))
        self.loss_curve_ = []
        for epoch in range(self.epochs):
            optimizer.lr = schedule.lr_at(epoch)
            loss = train_one_epoch(
                self.model_, optimizer, X, y_indices, self.batch_size,
                shuffle_rng=derive_rng(self.seed, _SHUFFLE, epoch),
                dropout_rng=derive_rng(self.seed, _DROPOUT, epoch),
                epoch=epoch,
            )
            self.loss_curve_.append(loss)
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise NotFittedError(f"{type(self).__name__} must be fitted before predicting")

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_images(X, self.image_size, self.in_channels)
        return predict_scores(self.model_, X, self.batch_size)

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        return self.classes_[self.predict_proba(X).argmax(axis=1)]

    def decision_function(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_images(X, self.image_size, self.in_channels)
        return self.model_.forward(Tensor(X)).data

    def score(self, X, y) -> float:
        y = np.asarray(y)
        return float(np.mean(self.predict(X) == check_labels(y, len(np.asarray(X)))))
