"""Metrics, stratified cross-validation, and majority-vote ensembling.

Class F1 uses 2*TP / (2*TP + FN + FP) with a zero-denominator convention of
0; the headline F1 average covers the N, A, and O classes only. Class
accuracy is recall (diagonal over row sum).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadConfig
from .network import Model, ModelConfig
from .records import CLASSES, Dataset, EcgRecord, stratified_partition
from .training import TrainConfig, TrainHistory, predict_records, train_model

F1_AVG_CLASSES = ("N", "A", "O")


def confusion_matrix(y_true, y_pred) -> np.ndarray:
    """4x4 counts; rows are true classes, columns predicted."""
    cm = np.zeros((len(CLASSES), len(CLASSES)), dtype=np.int64)
    for t, p in zip(y_true, y_pred, strict=True):
        cm[CLASSES.index(t), CLASSES.index(p)] += 1
    return cm


def f1_class(cm: np.ndarray, cls: str) -> float:
    c = CLASSES.index(cls)
    tp = cm[c, c]
    fn = cm[c].sum() - tp
    fp = cm[:, c].sum() - tp
    denom = 2 * tp + fn + fp
    return float(2 * tp / denom) if denom > 0 else 0.0


def f1_avg_from_scores(scores) -> float:
    scores = list(scores)
    if len(scores) != len(F1_AVG_CLASSES):
        raise BadConfig(f"f1_avg averages exactly {len(F1_AVG_CLASSES)} class scores")
    return float(sum(scores) / len(scores))


def f1_avg(cm: np.ndarray) -> float:
    """Unweighted mean F1 over N, A, and O (noisy class excluded)."""
    return f1_avg_from_scores([f1_class(cm, c) for c in F1_AVG_CLASSES])


def class_accuracies(cm: np.ndarray) -> dict[str, float]:
    out = {}
    for i, cls in enumerate(CLASSES):
        row = cm[i].sum()
        out[cls] = float(cm[i, i] / row) if row > 0 else 0.0
    return out


def overall_accuracy(cm: np.ndarray) -> float:
    total = cm.sum()
    return float(np.trace(cm) / total) if total > 0 else 0.0


@dataclass(frozen=True)
class MetricsReport:
    confusion: np.ndarray
    per_class_f1: dict[str, float]
    per_class_accuracy: dict[str, float]
    overall_accuracy: float
    f1_avg: float

    @classmethod
    def from_confusion(cls, cm: np.ndarray) -> "MetricsReport":
        return cls(
            confusion=cm,
            per_class_f1={c: f1_class(cm, c) for c in CLASSES},
            per_class_accuracy=class_accuracies(cm),
            overall_accuracy=overall_accuracy(cm),
            f1_avg=f1_avg(cm),
        )

    def to_json_dict(self) -> dict:
        return {
            "confusion": self.confusion.tolist(),
            "per_class_f1": self.per_class_f1,
            "per_class_accuracy": self.per_class_accuracy,
            "overall_accuracy": self.overall_accuracy,
            "f1_avg": self.f1_avg,
        }


def format_metrics_table(reports: dict[str, MetricsReport]) -> str:
    """Text table with acc. and F1 rows per architecture, percent units."""
    lines = [f"{'Arch':<10}{'metric':<8}" + "".join(f"{c:>8}" for c in CLASSES) + f"{'overall':>9}"]
    for name, rep in reports.items():
        accs = [rep.per_class_accuracy[c] for c in CLASSES]
        f1s = [rep.per_class_f1[c] for c in CLASSES]
        lines.append(
            f"{name:<10}{'acc.':<8}"
            + "".join(f"{100 * a:8.1f}" for a in accs)
            + f"{100 * rep.overall_accuracy:9.1f}"
        )
        lines.append(
            f"{name:<10}{'F1':<8}"
            + "".join(f"{100 * v:8.1f}" for v in f1s)
            + f"{100 * rep.f1_avg:9.1f}"
        )
    return "\n".join(lines) + "\n"


@dataclass
class FoldResult:
    fold: int
    report: MetricsReport
    histories: list[TrainHistory]


@dataclass
class CrossValResult:
    folds: list[FoldResult]
    pooled: MetricsReport

    def per_fold_f1_avg(self) -> tuple[float, float]:
        vals = np.array([f.report.f1_avg for f in self.folds])
        return float(vals.mean()), float(vals.std())


def cross_validate(
    model_config: ModelConfig,
    dataset: Dataset,
    train_config: TrainConfig,
    k: int = 5,
    seed: int = 0,
) -> CrossValResult:
    """Stratified k-fold CV; pooled report aggregates out-of-fold predictions."""
    assignment = stratified_partition(dataset, k, seed)
    by_id = dataset.by_id()
    folds: list[FoldResult] = []
    oof_true: list[str] = []
    oof_pred: list[str] = []
    for fold in range(k):
        train = [by_id[i] for i in assignment.train_ids(fold)]
        val = [by_id[i] for i in assignment.val_ids(fold)]
        test = [by_id[i] for i in assignment.test_ids(fold)]
        model, histories = train_model(model_config, train, val, train_config, seed=seed + fold)
        _, predicted = predict_records(model, test, train_config.batch_size)
        cm = confusion_matrix([r.label for r in test], predicted)
        folds.append(FoldResult(fold=fold, report=MetricsReport.from_confusion(cm),
                                histories=histories))
        oof_true.extend(r.label for r in test)
        oof_pred.extend(predicted)
    pooled = MetricsReport.from_confusion(confusion_matrix(oof_true, oof_pred))
    return CrossValResult(folds=folds, pooled=pooled)


def majority_vote(probs: np.ndarray) -> tuple[str, list[str]]:
    """Plurality over per-model argmax classes.

    Ties break on summed probability over the tied classes, then on the
    fixed class order N > A > O > ~.
    """
    votes = probs.argmax(axis=1)
    counts = np.bincount(votes, minlength=len(CLASSES))
    top = counts.max()
    tied = np.flatnonzero(counts == top)
    if len(tied) > 1:
        sums = probs[:, tied].sum(axis=0)
        tied = tied[np.flatnonzero(sums == sums.max())]
    winner = int(tied[0])
    return CLASSES[winner], [CLASSES[v] for v in votes]


def ensemble_predict(models: list[Model], record: EcgRecord) -> tuple[str, list[str]]:
    """Each model votes its argmax class for one record; plurality wins."""
    probs = np.vstack([predict_records(m, [record])[0][0] for m in models])
    return majority_vote(probs)


def ensemble_predict_many(models: list[Model], records, batch_size: int = 20):
    all_probs = np.stack(
        [predict_records(m, records, batch_size)[0] for m in models], axis=0
    )  # [n_models, n_records, 4]
    labels = []
    votes = []
    for i in range(all_probs.shape[1]):
        label, vote = majority_vote(all_probs[:, i])
        labels.append(label)
        votes.append(vote)
    return labels, votes


@dataclass
class EnsembleResult:
    models: list[Model]
    histories: list[list[TrainHistory]]
    val_ids: list[list[str]]


def ensemble_splits(dataset: Dataset, n_members: int, seed: int):
    """Stratified subsets; member i validates on subset i, trains on the rest."""
    assignment = stratified_partition(dataset, n_members, seed)
    splits = []
    for member in range(n_members):
        val_ids = assignment.test_ids(member)
        train_ids = sorted(i for i, f in assignment.fold_of.items() if f != member)
        splits.append((train_ids, val_ids))
    return splits


def build_ensemble(
    dataset: Dataset,
    model_config: ModelConfig,
    train_config: TrainConfig,
    n_members: int = 5,
    seed: int = 0,
) -> EnsembleResult:
    """Train one model per stratified subset, each validating on its own subset."""
    by_id = dataset.by_id()
    models: list[Model] = []
    histories: list[list[TrainHistory]] = []
    val_id_lists: list[list[str]] = []
    for member, (train_ids, val_ids) in enumerate(ensemble_splits(dataset, n_members, seed)):
        train = [by_id[i] for i in train_ids]
        val = [by_id[i] for i in val_ids]
        model, hist = train_model(model_config, train, val, train_config, seed=seed + 101 * member)
        models.append(model)
        histories.append(hist)
        val_id_lists.append(list(val_ids))
    return EnsembleResult(models=models, histories=histories, val_ids=val_id_lists)
