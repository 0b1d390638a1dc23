"""Training loops: weighted-loss optimization, early stopping on the
three-class F1 average, and the 3-phase CRNN protocol.

Phase 1 trains the conv stack under a temporal-average aggregator; phase 2
swaps in the LSTM block and trains only the new head with the conv stack
frozen (parameters and batchnorm statistics); phase 3 fine-tunes everything
with a stepped learning-rate decay, falling back to the phase-2 checkpoint
if it does not improve validation F1.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import nnops
from .augment import AugmentConfig, augment
from .batching import bucket_batches, pad_batch
from .errors import BadConfig, NonFiniteLoss
from .network import LSTM_BLOCK, TEMPORAL_AVERAGE, Model, ModelConfig, build, swap_aggregator
from .optim import Adam
from .records import CLASSES, EcgRecord
from .spectrogram import preprocess

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 20
    max_epochs: int = 500
    patience_epochs: int = 50
    lr: float = 1e-3
    phase2_epochs: int = 100
    phase3_decay_every: int = 200
    phase3_decay_factor: float = 10.0
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0
    # optional good-enough stop for cheap smoke/benchmark runs
    target_val_accuracy: float | None = None

    def __post_init__(self):
        if min(self.batch_size, self.max_epochs, self.patience_epochs,
               self.phase2_epochs, self.phase3_decay_every) < 1:
            raise BadConfig("all epoch/batch settings must be positive")
        if self.lr <= 0 or self.phase3_decay_factor <= 0:
            raise BadConfig("learning rate settings must be positive")
        if self.patience_epochs > self.max_epochs:
            raise BadConfig("patience cannot exceed max_epochs")


@dataclass
class EpochStats:
    epoch: int
    loss: float
    val_f1_avg: float
    val_accuracy: float
    lr: float
    phase: str


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    best_val_f1: float = -1.0

    def rows(self) -> list[dict]:
        return [vars(e) for e in self.epochs]


def compute_class_weights(records) -> np.ndarray:
    """w_c = N_total / (num_classes * N_c); absent classes get weight 0."""
    counts = np.zeros(len(CLASSES))
    for rec in records:
        if rec.label is not None:
            counts[CLASSES.index(rec.label)] += 1
    total = counts.sum()
    weights = np.zeros(len(CLASSES))
    present = counts > 0
    weights[present] = total / (len(CLASSES) * counts[present])
    absent = [c for c, p in zip(CLASSES, present) if not p]
    if absent:
        logger.warning("classes absent from training split get weight 0: %s", absent)
    return weights


def labels_to_indices(records) -> np.ndarray:
    return np.array([CLASSES.index(r.label) for r in records], dtype=np.int64)


def phase3_lr(base_lr: float, epoch: int, decay_every: int = 200, factor: float = 10.0) -> float:
    """Stepped decay: base for epochs 1..decay_every, then /factor per step."""
    return base_lr / factor ** ((epoch - 1) // decay_every)


def _spectrograms(records, rng, aug_config: AugmentConfig | None, min_frames: int = 1):
    specs = []
    for rec in records:
        if aug_config is not None and aug_config.enabled:
            cand = augment(rec, aug_config, rng)
            # resampling can compress a short record below the depth the
            # network needs; fall back to the original in that case
            if (len(cand) - 64) // 32 + 1 >= min_frames:
                rec = cand
        specs.append(preprocess(rec))
    return specs


def train_epoch(
    model: Model,
    records: list[EcgRecord],
    class_weights: np.ndarray,
    optimizer: Adam,
    config: TrainConfig,
    rng: np.random.Generator,
    conv_train: bool | None = None,
) -> float:
    """One pass over shuffled length-bucketed batches; returns mean batch loss."""
    if not records:
        raise BadConfig("training split is empty")
    specs = _spectrograms(records, rng, config.augment, model.config.min_frames())
    labels = labels_to_indices(records)
    batches = bucket_batches([s.valid_frames for s in specs], config.batch_size, rng)
    losses = []
    for batch_idx in batches:
        frames, lengths = pad_batch([specs[i] for i in batch_idx])
        logits = model.logits(ad.Tensor(frames), lengths, rng, train=True, conv_train=conv_train)
        loss = nnops.weighted_cross_entropy(logits, labels[batch_idx], class_weights)
        value = loss.item()
        if not np.isfinite(value):
            ids = [records[i].id for i in batch_idx]
            raise NonFiniteLoss(f"non-finite loss {value} on batch {ids}")
        ad.backward(loss)
        optimizer.step()
        optimizer.zero_grad()
        losses.append(value)
    return float(np.mean(losses))


def predict_records(model: Model, records, batch_size: int = 20):
    """Inference-mode (probabilities, argmax labels) in record order."""
    specs = [preprocess(rec) for rec in records]
    order = np.argsort([s.valid_frames for s in specs], kind="stable")
    probs = np.zeros((len(records), len(CLASSES)))
    for start in range(0, len(order), batch_size):
        chunk = order[start : start + batch_size]
        frames, lengths = pad_batch([specs[i] for i in chunk])
        probs[chunk] = model.predict_proba(frames, lengths)
    labels = [CLASSES[i] for i in probs.argmax(axis=1)]
    return probs, labels


def _validation_scores(model: Model, val_records, batch_size: int):
    from .evaluation import MetricsReport, confusion_matrix

    _, predicted = predict_records(model, val_records, batch_size)
    cm = confusion_matrix([r.label for r in val_records], predicted)
    report = MetricsReport.from_confusion(cm)
    return report.f1_avg, report.overall_accuracy


def fit_with_early_stopping(
    model: Model,
    train_records: list[EcgRecord],
    val_records: list[EcgRecord],
    config: TrainConfig,
    optimizer: Adam | None = None,
    max_epochs: int | None = None,
    lr_for_epoch=None,
    phase: str = "single",
    rng: np.random.Generator | None = None,
    rng_stream: int = 0,
    conv_train: bool | None = None,
) -> TrainHistory:
    """Train until validation F1 stops improving; restore the best snapshot.

    The model is left holding the best-epoch parameters; the history records
    every epoch. ``lr_for_epoch`` (1-based epoch -> lr) overrides the flat
    configured rate.
    """
    if not val_records:
        raise BadConfig("validation split is empty")
    if optimizer is None:
        optimizer = Adam(model.params(), lr=config.lr)
    if rng is None:
        rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence((config.seed, 5, rng_stream)))
        )
    cap = config.max_epochs if max_epochs is None else max_epochs
    weights = compute_class_weights(train_records)
    history = TrainHistory()
    best_snap = model.snapshot()
    best_f1 = -1.0
    since_best = 0
    for epoch in range(1, cap + 1):
        if lr_for_epoch is not None:
            optimizer.lr = lr_for_epoch(epoch)
        loss = train_epoch(model, train_records, weights, optimizer, config, rng, conv_train)
        val_f1, val_acc = _validation_scores(model, val_records, config.batch_size)
        history.epochs.append(
            EpochStats(epoch=epoch, loss=loss, val_f1_avg=val_f1,
                       val_accuracy=val_acc, lr=optimizer.lr, phase=phase)
        )
        if val_f1 > best_f1:
            best_f1 = val_f1
            best_snap = model.snapshot()
            history.best_epoch = epoch
            history.best_val_f1 = val_f1
            since_best = 0
        else:
            since_best += 1
        logger.info("%s epoch %d: loss %.4f val_f1 %.4f val_acc %.4f",
                    phase, epoch, loss, val_f1, val_acc)
        if config.target_val_accuracy is not None and val_acc >= config.target_val_accuracy:
            break
        if since_best >= config.patience_epochs:
            break
    model.restore(best_snap)
    return history


def train_single(
    model_config: ModelConfig,
    train_records,
    val_records,
    config: TrainConfig,
    seed: int,
) -> tuple[Model, list[TrainHistory]]:
    """End-to-end training for the CNN (or any single-phase model)."""
    model = build(model_config, seed=seed)
    history = fit_with_early_stopping(model, train_records, val_records, config, phase="single")
    return model, [history]


def train_crnn_three_phase(
    model_config: ModelConfig,
    train_records,
    val_records,
    config: TrainConfig,
    seed: int,
    on_phase_end=None,
) -> tuple[Model, list[TrainHistory]]:
    """The 3-phase CRNN protocol; returns the best of phase 2 and phase 3.

    ``on_phase_end(phase_name, model)`` is called after each phase's best
    checkpoint is restored, for logging and verification.
    """
    if model_config.arch != "crnn":
        raise BadConfig("three-phase protocol expects a crnn configuration")

    def phase_done(name, mdl):
        if on_phase_end is not None:
            on_phase_end(name, mdl)

    # Phase 1: conv stack + temporal averaging + linear classifier.
    model = build(model_config, seed=seed, aggregator=TEMPORAL_AVERAGE)
    h1 = fit_with_early_stopping(model, train_records, val_records, config,
                                 phase="phase1", rng_stream=1)
    phase_done("phase1", model)

    # Phase 2: swap in the LSTM head; conv stack fully frozen (parameters,
    # batchnorm statistics, and its dropout run in inference mode).
    model = swap_aggregator(model, LSTM_BLOCK, seed=seed + 1)
    for p in model.conv_params().values():
        p.requires_grad = False
    head_opt = Adam(model.head_params(), lr=config.lr)
    h2 = fit_with_early_stopping(
        model,
        train_records,
        val_records,
        config,
        optimizer=head_opt,
        max_epochs=config.phase2_epochs,
        phase="phase2",
        rng_stream=2,
        conv_train=False,
    )
    phase_done("phase2", model)
    phase2_snap = model.snapshot()
    phase2_f1 = h2.best_val_f1

    # Phase 3: joint fine-tuning with stepped learning-rate decay.
    for p in model.conv_params().values():
        p.requires_grad = True
    full_opt = Adam(model.params(), lr=config.lr)
    h3 = fit_with_early_stopping(
        model,
        train_records,
        val_records,
        config,
        optimizer=full_opt,
        lr_for_epoch=lambda e: phase3_lr(config.lr, e, config.phase3_decay_every,
                                         config.phase3_decay_factor),
        phase="phase3",
        rng_stream=3,
    )
    phase_done("phase3", model)
    if h3.best_val_f1 < phase2_f1:
        model.restore(phase2_snap)
    return model, [h1, h2, h3]


def train_model(
    model_config: ModelConfig,
    train_records,
    val_records,
    config: TrainConfig,
    seed: int,
) -> tuple[Model, list[TrainHistory]]:
    if model_config.arch == "crnn":
        return train_crnn_three_phase(model_config, train_records, val_records, config, seed)
    return train_single(model_config, train_records, val_records, config, seed)
