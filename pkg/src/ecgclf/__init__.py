"""ECG rhythm classification with CNN and CRNN architectures.

Public API follows the scikit-learn estimator conventions; the lower-level
pipeline (records, spectrograms, augmentation, training, evaluation) is
importable from the submodules.
"""

from .augment import AugmentConfig, augment, dropout_bursts, random_resample
from .checkpoint import load_checkpoint, save_checkpoint
from .estimators import EcgClassifier, EcgEnsembleClassifier, SpectrogramTransformer
from .evaluation import MetricsReport, build_ensemble, cross_validate, ensemble_predict
from .network import Model, ModelConfig, build, swap_aggregator
from .records import (
    CLASSES,
    Dataset,
    EcgRecord,
    FoldAssignment,
    load_manifest,
    load_record,
    stratified_partition,
    write_record,
)
from .spectrogram import Spectrogram, log_transform, normalize, preprocess, stft_magnitude, tukey_window
from .training import TrainConfig, train_crnn_three_phase, train_model

__all__ = [
    "AugmentConfig",
    "CLASSES",
    "Dataset",
    "EcgClassifier",
    "EcgEnsembleClassifier",
    "EcgRecord",
    "FoldAssignment",
    "MetricsReport",
    "Model",
    "ModelConfig",
    "Spectrogram",
    "SpectrogramTransformer",
    "TrainConfig",
    "augment",
    "build",
    "build_ensemble",
    "cross_validate",
    "dropout_bursts",
    "ensemble_predict",
    "load_checkpoint",
    "load_manifest",
    "load_record",
    "log_transform",
    "normalize",
    "preprocess",
    "random_resample",
    "save_checkpoint",
    "stft_magnitude",
    "stratified_partition",
    "swap_aggregator",
    "train_crnn_three_phase",
    "train_model",
    "tukey_window",
    "write_record",
]

__version__ = "0.1.0"
