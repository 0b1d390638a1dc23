"""ECG record and manifest loading plus stratified data partitions.

Signal files come in two flavors: a diffable text format (header line
``id,sample_rate_hz`` followed by one amplitude per line) and a compact
binary format (16-byte header, then little-endian float32 samples).
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ClassTooSmall,
    DuplicateId,
    MalformedFile,
    MissingFile,
    NonFinite,
    TooShort,
    UnknownLabel,
)

CLASSES = ("N", "A", "O", "~")

# Records shorter than two analysis windows carry no usable spectrogram.
MIN_SAMPLES = 128

_BIN_MAGIC = b"ECG1"
_BIN_HEADER = struct.Struct("<4sIf4s")


@dataclass(frozen=True)
class EcgRecord:
    """A single-lead ECG signal with an optional rhythm label."""

    id: str
    samples: np.ndarray
    sample_rate_hz: float = 300.0
    label: str | None = None

    def __post_init__(self):
        # private copy: records are immutable and must not freeze caller arrays
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise MalformedFile(f"record {self.id!r}: samples must be 1-D")
        if not np.all(np.isfinite(samples)):
            raise NonFinite(f"record {self.id!r}: non-finite samples")
        if not self.sample_rate_hz > 0:
            raise MalformedFile(f"record {self.id!r}: sample rate must be positive")
        if self.label is not None and self.label not in CLASSES:
            raise UnknownLabel(f"record {self.id!r}: label {self.label!r}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of records with per-class label counts."""

    records: tuple[EcgRecord, ...]
    class_counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            if rec.id in seen:
                raise DuplicateId(rec.id)
            seen.add(rec.id)
        counts = {c: 0 for c in CLASSES}
        for rec in self.records:
            if rec.label is not None:
                counts[rec.label] += 1
        object.__setattr__(self, "class_counts", counts)

    def __len__(self) -> int:
        return len(self.records)

    def labeled(self) -> list[EcgRecord]:
        return [r for r in self.records if r.label is not None]

    def by_id(self) -> dict[str, EcgRecord]:
        return {r.id: r for r in self.records}


def load_record(path, sample_rate_hz: float = 300.0, format: str = "text") -> EcgRecord:
    """Load one signal file.

    The rate stored in the file wins; ``sample_rate_hz`` is the fallback for
    files that do not carry one.
    """
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    if format == "text":
        rec_id, rate, samples = _read_text(path)
    elif format == "bin":
        rec_id, rate, samples = _read_bin(path)
    else:
        raise MalformedFile(f"unknown signal format {format!r}")
    if rate is None or rate <= 0:
        rate = sample_rate_hz
    if not np.all(np.isfinite(samples)):
        raise NonFinite(f"{path}: non-finite sample values")
    if len(samples) < MIN_SAMPLES:
        raise TooShort(f"{path}: {len(samples)} samples, need at least {MIN_SAMPLES}")
    return EcgRecord(id=rec_id, samples=samples, sample_rate_hz=float(rate))


def _read_text(path: Path):
    try:
        text = path.read_text()
    except OSError as exc:
        raise MalformedFile(f"{path}: {exc}") from exc
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise MalformedFile(f"{path}: empty file")
    head = lines[0].split(",")
    if len(head) != 2:
        raise MalformedFile(f"{path}: bad header {lines[0]!r}")
    rec_id = head[0].strip()
    try:
        rate = float(head[1])
    except ValueError as exc:
        raise MalformedFile(f"{path}: bad sample rate {head[1]!r}") from exc
    try:
        samples = np.array(lines[1:], dtype=np.float64)
    except ValueError as exc:
        raise MalformedFile(f"{path}: bad amplitude value") from exc
    return rec_id, rate, samples


def _read_bin(path: Path):
    raw = path.read_bytes()
    if len(raw) < _BIN_HEADER.size:
        raise MalformedFile(f"{path}: truncated header")
    magic, count, rate, _ = _BIN_HEADER.unpack_from(raw)
    if magic != _BIN_MAGIC:
        raise MalformedFile(f"{path}: bad magic {magic!r}")
    body = raw[_BIN_HEADER.size:]
    if len(body) != 4 * count:
        raise MalformedFile(f"{path}: expected {count} samples, got {len(body) // 4}")
    samples = np.frombuffer(body, dtype="<f4").astype(np.float64)
    return path.stem, rate, samples


def write_record(record: EcgRecord, path, format: str = "text") -> None:
    """Write a record so that reloading yields bit-identical samples."""
    path = Path(path)
    if format == "text":
        lines = [f"{record.id},{record.sample_rate_hz!r}"]
        lines.extend(repr(float(v)) for v in record.samples)
        path.write_text("\n".join(lines) + "\n")
    elif format == "bin":
        data = record.samples.astype("<f4")
        header = _BIN_HEADER.pack(_BIN_MAGIC, len(data), record.sample_rate_hz, b"\0" * 4)
        path.write_bytes(header + data.tobytes())
    else:
        raise MalformedFile(f"unknown signal format {format!r}")


def load_manifest(path, data_root=None, format: str = "text") -> Dataset:
    """Load a label manifest (rows ``id,relative_path,label``) and its signals.

    The label column may be blank for unlabeled records (prediction input).
    """
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    root = Path(data_root) if data_root is not None else path.parent
    records: list[EcgRecord] = []
    seen: set[str] = set()
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) not in (2, 3):
                raise MalformedFile(f"{path}:{lineno}: expected id,path[,label]")
            rec_id = row[0].strip()
            rel = row[1].strip()
            label = row[2].strip() if len(row) == 3 else ""
            if rec_id in seen:
                raise DuplicateId(f"{path}:{lineno}: duplicate id {rec_id!r}")
            seen.add(rec_id)
            if label and label not in CLASSES:
                raise UnknownLabel(f"{path}:{lineno}: label {label!r}")
            sig_path = root / rel
            if not sig_path.exists():
                raise MissingFile(f"{path}:{lineno}: {sig_path}")
            loaded = load_record(sig_path, format=format)
            records.append(
                EcgRecord(
                    id=rec_id,
                    samples=loaded.samples,
                    sample_rate_hz=loaded.sample_rate_hz,
                    label=label or None,
                )
            )
    return Dataset(records=tuple(records))


@dataclass(frozen=True)
class FoldAssignment:
    """Stratified k-fold partition with per-fold early-stopping subsets.

    ``fold_of`` maps record id to its fold; ``val_of`` maps a fold index to
    the ids carved out of that fold's training portion for validation.
    """

    k: int
    fold_of: dict[str, int]
    val_of: dict[int, frozenset[str]]

    def test_ids(self, fold: int) -> list[str]:
        return sorted(i for i, f in self.fold_of.items() if f == fold)

    def val_ids(self, fold: int) -> list[str]:
        return sorted(self.val_of[fold])

    def train_ids(self, fold: int) -> list[str]:
        held = self.val_of[fold]
        return sorted(
            i for i, f in self.fold_of.items() if f != fold and i not in held
        )


def _class_rng(seed: int, *salt: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed,) + salt)))


def stratified_partition(dataset: Dataset, k: int, seed: int) -> FoldAssignment:
    """Deal labeled records into k stratified folds, deterministically.

    Records are sorted by id before the seeded shuffle so the partition is
    reproducible across platforms. Each fold's validation subset is a
    stratified 1/6 of that fold's training portion.
    """
    if k < 2:
        raise ClassTooSmall(f"k must be >= 2, got {k}")
    by_class: dict[str, list[str]] = {c: [] for c in CLASSES}
    for rec in dataset.labeled():
        by_class[rec.label].append(rec.id)
    fold_of: dict[str, int] = {}
    for ci, cls in enumerate(CLASSES):
        ids = sorted(by_class[cls])
        if not ids:
            continue
        if len(ids) < k:
            raise ClassTooSmall(f"class {cls!r} has {len(ids)} records, need >= {k}")
        rng = _class_rng(seed, 0, ci)
        order = np.array(ids, dtype=object)
        rng.shuffle(order)
        for i, rec_id in enumerate(order):
            fold_of[rec_id] = i % k
    val_of: dict[int, frozenset[str]] = {}
    for fold in range(k):
        held: list[str] = []
        for ci, cls in enumerate(CLASSES):
            pool = sorted(
                i for i in by_class[cls] if i in fold_of and fold_of[i] != fold
            )
            if not pool:
                continue
            n_val = int(np.floor(len(pool) / 6 + 0.5))
            rng = _class_rng(seed, 1, fold, ci)
            order = np.array(pool, dtype=object)
            rng.shuffle(order)
            held.extend(order[:n_val])
        val_of[fold] = frozenset(held)
    return FoldAssignment(k=k, fold_of=fold_of, val_of=val_of)


def stratified_holdout(records, fraction: float, seed: int):
    """Split labeled records into (train, held_out) stratified by class."""
    by_class: dict[str, list[EcgRecord]] = {c: [] for c in CLASSES}
    for rec in records:
        if rec.label is None:
            raise UnknownLabel(f"record {rec.id!r} has no label")
        by_class[rec.label].append(rec)
    train: list[EcgRecord] = []
    held: list[EcgRecord] = []
    for ci, cls in enumerate(CLASSES):
        group = sorted(by_class[cls], key=lambda r: r.id)
        if not group:
            continue
        rng = _class_rng(seed, 2, ci)
        idx = rng.permutation(len(group))
        n_held = int(np.floor(len(group) * fraction + 0.5))
        if len(group) > 1:
            n_held = max(1, min(n_held, len(group) - 1))
        held_idx = set(idx[:n_held].tolist())
        for i, rec in enumerate(group):
            (held if i in held_idx else train).append(rec)
    return train, held
