"""Input validation helpers for the estimator API.

Signals arrive as lists of 1-D arrays (variable length), a 2-D array of
equal-length rows, or ready-made EcgRecord objects.
"""
from __future__ import annotations

import numpy as np

from .errors import NonFinite, TooShort, UnknownLabel
from .records import CLASSES, MIN_SAMPLES, EcgRecord


def check_signal(x, name: str = "signal") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite(f"{name} contains non-finite values")
    if len(arr) < MIN_SAMPLES:
        raise TooShort(f"{name} has {len(arr)} samples, need at least {MIN_SAMPLES}")
    return arr


def check_labels(y, n: int) -> list[str]:
    labels = [str(v) for v in np.asarray(y, dtype=object).ravel()]
    if len(labels) != n:
        raise ValueError(f"got {len(labels)} labels for {n} signals")
    bad = sorted({v for v in labels if v not in CLASSES})
    if bad:
        raise UnknownLabel(f"labels must be among {CLASSES}, got {bad}")
    return labels


def to_records(X, y=None, sample_rate_hz: float = 300.0) -> list[EcgRecord]:
    """Normalize estimator input into labeled (or unlabeled) records."""
    if isinstance(X, np.ndarray) and X.ndim == 2:
        X = list(X)
    signals = list(X)
    if all(isinstance(s, EcgRecord) for s in signals):
        records = list(signals)
        if y is not None:
            labels = check_labels(y, len(records))
            records = [
                EcgRecord(id=r.id, samples=r.samples, sample_rate_hz=r.sample_rate_hz,
                          label=lab)
                for r, lab in zip(records, labels)
            ]
        return records
    labels = check_labels(y, len(signals)) if y is not None else [None] * len(signals)
    width = len(str(max(len(signals) - 1, 0)))
    return [
        EcgRecord(
            id=f"x{i:0{width}d}",
            samples=check_signal(s, name=f"X[{i}]"),
            sample_rate_hz=sample_rate_hz,
            label=lab,
        )
        for i, (s, lab) in enumerate(zip(signals, labels))
    ]
