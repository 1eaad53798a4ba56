"""Scikit-learn style estimator facade over the training and inference pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .config import desk_config
from .inference import evaluate_samples, predict_probabilities
from .metrics import binarize
from .training import fit_model
from .validation import check_image_pairs, check_masks, pairs_to_samples


class ChangeDetector(BaseEstimator):
    """Binary change detector over co-registered image pairs.

    fit(X, y) trains the Siamese window-attention network on pairs X with
    binary masks y; predict(X) returns per-pixel change masks. X is either a
    tuple (A, B) of (n, H, W, 3) arrays or a single (n, 2, H, W, 3) array.
    Defaults follow the laptop-scale profile so that small in-memory datasets
    train in minutes on CPU.
    """

    def __init__(self, input_size: int = 64, embed_dim: int = 32, window_size: int = 4,
                 decoder: str = "pcp", use_dfe: bool = True, use_pam: bool = True,
                 lr: float = 6.5e-3, batch_size: int = 6, epochs: int = 100,
                 max_steps: int = 200, augment: bool = False, threshold: float = 0.5,
                 seed: int = 0):
        self.input_size = input_size
        self.embed_dim = embed_dim
        self.window_size = window_size
        self.decoder = decoder
        self.use_dfe = use_dfe
        self.use_pam = use_pam
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.max_steps = max_steps
        self.augment = augment
        self.threshold = threshold
        self.seed = seed

    def _build_config(self):
        return desk_config(
            input_size=self.input_size,
            embed_dim=self.embed_dim,
            reduce_to=self.embed_dim,
            window_size=self.window_size,
            decoder=self.decoder,
            use_dfe=self.use_dfe,
            use_pam=self.use_pam,
            lr=self.lr,
            batch_size=self.batch_size,
            epochs=self.epochs,
            max_steps=self.max_steps,
            augment=self.augment,
            threshold=self.threshold,
            seed=self.seed,
        )

    def fit(self, X, y):
        a, b = check_image_pairs(X)
        if a.shape[1] != self.input_size or a.shape[2] != self.input_size:
            raise ValueError(
                f"images must be {self.input_size}x{self.input_size}; "
                f"got {a.shape[1]}x{a.shape[2]} (set input_size accordingly)"
            )
        masks = check_masks(y, a.shape)
        samples = pairs_to_samples(a, b, masks, prefix="fit")
        self.config_ = self._build_config()
        result = fit_model(self.config_, samples, samples)
        self.model_ = result.model
        self.model_.eval()
        self.history_ = result.history
        self.class_frequencies_ = result.frequencies
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        a, b = check_image_pairs(X)
        samples = pairs_to_samples(a, b, None, prefix="predict")
        return np.stack(predict_probabilities(self.model_, samples,
                                              batch_size=self.batch_size))

    def predict(self, X) -> np.ndarray:
        return binarize(self.predict_proba(X), self.threshold)

    def score(self, X, y) -> float:
        """Change-class F1 over all pixels of the set."""
        check_is_fitted(self, "model_")
        a, b = check_image_pairs(X)
        masks = check_masks(y, a.shape)
        samples = pairs_to_samples(a, b, masks, prefix="score")
        metrics, _ = evaluate_samples(self.model_, samples, self.threshold,
                                      self.batch_size)
        return metrics["f1"]
