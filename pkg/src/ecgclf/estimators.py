"""Scikit-learn style estimators wrapping the training and inference pipeline.

``EcgClassifier`` accepts variable-length single-lead signals (a list of 1-D
arrays, a 2-D array of equal-length rows, or EcgRecord objects) and exposes
the usual fit / predict / predict_proba / score surface, so it composes with
the wider ecosystem; ``get_params``/``set_params`` come from BaseEstimator.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .augment import AugmentConfig
from .evaluation import ensemble_splits, majority_vote
from .network import ModelConfig
from .records import CLASSES, Dataset, stratified_holdout
from .spectrogram import preprocess
from .training import TrainConfig, predict_records, train_model
from .validation import to_records


class SpectrogramTransformer(BaseEstimator, TransformerMixin):
    """Stateless frontend: signals -> normalized log-spectrogram matrices."""

    def __init__(self, window_samples=64, hop_samples=32, tukey_shape=0.25,
                 log_eps=1e-6, normalize=True, sample_rate_hz=300.0):
        self.window_samples = window_samples
        self.hop_samples = hop_samples
        self.tukey_shape = tukey_shape
        self.log_eps = log_eps
        self.normalize = normalize
        self.sample_rate_hz = sample_rate_hz

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        records = to_records(X, sample_rate_hz=self.sample_rate_hz)
        return [
            preprocess(
                rec,
                window_samples=self.window_samples,
                hop_samples=self.hop_samples,
                shape=self.tukey_shape,
                eps=self.log_eps,
                do_normalize=self.normalize,
            ).frames
            for rec in records
        ]


class EcgClassifier(BaseEstimator, ClassifierMixin):
    """CNN or CRNN rhythm classifier over arbitrary-length ECG signals.

    Fitting carves a stratified ``validation_fraction`` off the training data
    for early stopping on the three-class F1 average; the CRNN runs the
    3-phase protocol (average-aggregator pretraining, frozen-conv LSTM
    training, joint fine-tuning).
    """

    def __init__(
        self,
        arch="cnn",
        scale=1.0,
        batch_size=20,
        max_epochs=500,
        patience_epochs=50,
        learning_rate=1e-3,
        phase2_epochs=100,
        dropout_p=0.15,
        augment=True,
        burst_rate_per_10s=2.0,
        burst_width_ms=50.0,
        hr_range_bpm=(60.0, 120.0),
        validation_fraction=1 / 6,
        sample_rate_hz=300.0,
        target_val_accuracy=None,
        seed=0,
    ):
        self.arch = arch
        self.scale = scale
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience_epochs = patience_epochs
        self.learning_rate = learning_rate
        self.phase2_epochs = phase2_epochs
        self.dropout_p = dropout_p
        self.augment = augment
        self.burst_rate_per_10s = burst_rate_per_10s
        self.burst_width_ms = burst_width_ms
        self.hr_range_bpm = hr_range_bpm
        self.validation_fraction = validation_fraction
        self.sample_rate_hz = sample_rate_hz
        self.target_val_accuracy = target_val_accuracy
        self.seed = seed

    def _model_config(self) -> ModelConfig:
        return ModelConfig(arch=self.arch, scale=self.scale, dropout_p=self.dropout_p)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience_epochs=self.patience_epochs,
            lr=self.learning_rate,
            phase2_epochs=self.phase2_epochs,
            augment=AugmentConfig(
                burst_rate_per_10s=self.burst_rate_per_10s,
                burst_width_ms=self.burst_width_ms,
                hr_range_bpm=tuple(self.hr_range_bpm),
                enabled=self.augment,
            ),
            seed=self.seed,
            target_val_accuracy=self.target_val_accuracy,
        )

    def fit(self, X, y=None):
        records = to_records(X, y, self.sample_rate_hz)
        if any(r.label is None for r in records):
            raise ValueError("fit requires a label for every signal")
        train, val = stratified_holdout(records, self.validation_fraction, self.seed)
        self.model_, self.history_ = train_model(
            self._model_config(), train, val, self._train_config(), seed=self.seed
        )
        self.classes_ = np.array(CLASSES)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        records = to_records(X, sample_rate_hz=self.sample_rate_hz)
        probs, _ = predict_records(self.model_, records, self.batch_size)
        return probs

    def predict(self, X):
        check_is_fitted(self, "model_")
        records = to_records(X, sample_rate_hz=self.sample_rate_hz)
        _, labels = predict_records(self.model_, records, self.batch_size)
        return np.array(labels)


class EcgEnsembleClassifier(BaseEstimator, ClassifierMixin):
    """Majority vote over ``n_members`` classifiers with rotating validation.

    The training data is split into ``n_members`` stratified subsets; member
    i holds out subset i for early stopping and trains on the rest, so the
    ensemble sees every record during training.
    """

    def __init__(
        self,
        arch="cnn",
        scale=1.0,
        n_members=5,
        batch_size=20,
        max_epochs=500,
        patience_epochs=50,
        learning_rate=1e-3,
        phase2_epochs=100,
        dropout_p=0.15,
        augment=True,
        sample_rate_hz=300.0,
        target_val_accuracy=None,
        seed=0,
    ):
        self.arch = arch
        self.scale = scale
        self.n_members = n_members
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience_epochs = patience_epochs
        self.learning_rate = learning_rate
        self.phase2_epochs = phase2_epochs
        self.dropout_p = dropout_p
        self.augment = augment
        self.sample_rate_hz = sample_rate_hz
        self.target_val_accuracy = target_val_accuracy
        self.seed = seed

    def fit(self, X, y=None):
        records = to_records(X, y, self.sample_rate_hz)
        if any(r.label is None for r in records):
            raise ValueError("fit requires a label for every signal")
        dataset = Dataset(records=tuple(records))
        model_config = ModelConfig(arch=self.arch, scale=self.scale, dropout_p=self.dropout_p)
        train_config = TrainConfig(
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience_epochs=self.patience_epochs,
            lr=self.learning_rate,
            phase2_epochs=self.phase2_epochs,
            augment=AugmentConfig(enabled=self.augment),
            seed=self.seed,
            target_val_accuracy=self.target_val_accuracy,
        )
        by_id = dataset.by_id()
        self.models_ = []
        self.histories_ = []
        for member, (train_ids, val_ids) in enumerate(
            ensemble_splits(dataset, self.n_members, self.seed)
        ):
            model, hist = train_model(
                model_config,
                [by_id[i] for i in train_ids],
                [by_id[i] for i in val_ids],
                train_config,
                seed=self.seed + 101 * member,
            )
            self.models_.append(model)
            self.histories_.append(hist)
        self.classes_ = np.array(CLASSES)
        return self

    def predict(self, X):
        check_is_fitted(self, "models_")
        records = to_records(X, sample_rate_hz=self.sample_rate_hz)
        stacked = np.stack(
            [predict_records(m, records, self.batch_size)[0] for m in self.models_]
        )
        return np.array([majority_vote(stacked[:, i])[0] for i in range(len(records))])

    def predict_proba(self, X):
        """Mean member probabilities; ``predict`` majority-votes instead, so
        its label can differ from this array's argmax on split votes."""
        check_is_fitted(self, "models_")
        records = to_records(X, sample_rate_hz=self.sample_rate_hz)
        stacked = np.stack(
            [predict_records(m, records, self.batch_size)[0] for m in self.models_]
        )
        return stacked.mean(axis=0)
