"""Normalized logarithmic one-sided spectrogram frontend.

The time-domain signal is cut into tapered windows of 64 samples with 50%
overlap, each window is Fourier transformed, and the one-sided magnitudes
are log-compressed and normalized per record.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import BadShape, NegativeInput, TooShort
from .records import EcgRecord

DEFAULT_WINDOW = 64
DEFAULT_HOP = 32
DEFAULT_TUKEY_SHAPE = 0.25
DEFAULT_LOG_EPS = 1e-6
VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class Spectrogram:
    """Time-by-frequency real matrix plus the framing that produced it."""

    frames: np.ndarray
    valid_frames: int
    hop_samples: int
    window_samples: int

    @property
    def num_bins(self) -> int:
        return self.frames.shape[1]


def tukey_window(length: int, shape: float = DEFAULT_TUKEY_SHAPE) -> np.ndarray:
    """Tapered-cosine window: flat center, raised-cosine edges.

    ``shape`` is the fraction of the window occupied by the two tapers;
    0 gives a rectangular window, 1 a Hann window.
    """
    if not 0.0 <= shape <= 1.0:
        raise BadShape(f"shape must lie in [0, 1], got {shape}")
    if length < 2:
        raise BadShape(f"window length must be >= 2, got {length}")
    if shape == 0.0:
        return np.ones(length)
    k = np.arange(length, dtype=np.float64)
    edge_dist = np.minimum(k, length - 1 - k)
    taper_len = shape * (length - 1) / 2.0
    w = np.ones(length)
    in_taper = edge_dist < taper_len
    w[in_taper] = 0.5 * (1.0 + np.cos(np.pi * (edge_dist[in_taper] / taper_len - 1.0)))
    return w


def frame_count(n_samples: int, window: int = DEFAULT_WINDOW, hop: int = DEFAULT_HOP) -> int:
    if n_samples < window:
        raise TooShort(f"{n_samples} samples, need at least {window}")
    return (n_samples - window) // hop + 1


def stft_magnitude(
    samples,
    window_samples: int = DEFAULT_WINDOW,
    hop_samples: int = DEFAULT_HOP,
    shape: float = DEFAULT_TUKEY_SHAPE,
) -> Spectrogram:
    """One-sided magnitude spectrogram over a sliding tapered window."""
    samples = np.asarray(samples, dtype=np.float64)
    n_frames = frame_count(len(samples), window_samples, hop_samples)
    window = tukey_window(window_samples, shape)
    segments = np.lib.stride_tricks.sliding_window_view(samples, window_samples)
    segments = segments[:: hop_samples][:n_frames]
    mags = np.abs(np.fft.rfft(segments * window, axis=1))
    return Spectrogram(
        frames=mags,
        valid_frames=n_frames,
        hop_samples=hop_samples,
        window_samples=window_samples,
    )


def log_transform(spec: Spectrogram, eps: float = DEFAULT_LOG_EPS) -> Spectrogram:
    """Entry-wise natural log of (value + eps); strictly monotone in input."""
    if np.any(spec.frames < 0):
        raise NegativeInput("log transform expects nonnegative magnitudes")
    return replace(spec, frames=np.log(spec.frames + eps))


def normalize(spec: Spectrogram) -> Spectrogram:
    """Shift/scale the whole matrix to zero mean, unit variance.

    Degenerate (near-constant) input maps to all zeros instead of blowing up.
    """
    if spec.frames.size < 2:
        raise BadShape("normalize needs at least 2 entries")
    mean = spec.frames.mean()
    var = spec.frames.var()
    if var < VARIANCE_FLOOR:
        return replace(spec, frames=np.zeros_like(spec.frames))
    return replace(spec, frames=(spec.frames - mean) / np.sqrt(var))


def preprocess(
    record: EcgRecord,
    window_samples: int = DEFAULT_WINDOW,
    hop_samples: int = DEFAULT_HOP,
    shape: float = DEFAULT_TUKEY_SHAPE,
    eps: float = DEFAULT_LOG_EPS,
    do_normalize: bool = True,
) -> Spectrogram:
    """Full frontend: magnitude spectrogram, log compression, normalization."""
    spec = stft_magnitude(record.samples, window_samples, hop_samples, shape)
    spec = log_transform(spec, eps)
    if do_normalize:
        spec = normalize(spec)
    return spec
