"""Variable-length batching: length buckets, padding, and valid-frame masks."""
from __future__ import annotations

import numpy as np

from .spectrogram import Spectrogram


def pad_batch(specs: list[Spectrogram], dtype=np.float32):
    """Pad spectrograms to a common frame count; returns (frames, lengths)."""
    lengths = np.array([s.valid_frames for s in specs], dtype=np.int64)
    t_max = int(lengths.max())
    n_bins = specs[0].frames.shape[1]
    frames = np.zeros((len(specs), t_max, n_bins), dtype=dtype)
    for i, s in enumerate(specs):
        frames[i, : s.valid_frames] = s.frames
    return frames, lengths


def bucket_batches(lengths, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Split indices into shuffled batches of similar-length items.

    Items are shuffled, stably sorted by length (so equal lengths stay
    shuffled), chunked, and the chunk order is shuffled again. Padding waste
    stays low without making batch composition deterministic in length rank.
    """
    lengths = np.asarray(lengths)
    order = rng.permutation(len(lengths))
    order = order[np.argsort(lengths[order], kind="stable")]
    chunks = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    rng.shuffle(chunks)
    return chunks
