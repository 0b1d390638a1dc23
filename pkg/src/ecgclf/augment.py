"""Training-time signal augmentations: dropout bursts and random resampling.

Dropout bursts zero the signal in short windows to mimic lead-contact loss.
Random resampling stretches or compresses the time axis so that, under an
assumed 80 bpm baseline, the apparent heart rate is uniform on [60, 120] bpm.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadConfig
from .records import EcgRecord


@dataclass(frozen=True)
class AugmentConfig:
    burst_rate_per_10s: float = 2.0
    burst_width_ms: float = 50.0
    hr_assumed_bpm: float = 80.0
    hr_range_bpm: tuple[float, float] = (60.0, 120.0)
    enabled: bool = True

    def __post_init__(self):
        lo, hi = self.hr_range_bpm
        if not (0.0 < lo <= hi < 300.0):
            raise BadConfig(f"heart-rate range must lie in (0, 300), got {self.hr_range_bpm}")
        if self.burst_width_ms <= 0:
            raise BadConfig("burst width must be positive")
        if self.burst_rate_per_10s < 0:
            raise BadConfig("burst rate must be nonnegative")
        if self.hr_assumed_bpm <= 0:
            raise BadConfig("assumed heart rate must be positive")


def zero_bursts(samples: np.ndarray, centers, half_width_samples: float) -> np.ndarray:
    """Zero every sample within ``half_width_samples`` of each center index."""
    out = np.array(samples, dtype=np.float64)
    n = len(out)
    for c in centers:
        lo = max(0, int(np.ceil(c - half_width_samples)))
        hi = min(n - 1, int(np.floor(c + half_width_samples)))
        out[lo : hi + 1] = 0.0
    return out


def dropout_bursts(
    samples,
    sample_rate_hz: float,
    config: AugmentConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Zero the signal around Poisson-many uniformly drawn time instants.

    The burst count scales with duration (mean ``burst_rate_per_10s`` per
    10 s); every sample within half the burst width of a center becomes 0
    and all other samples are returned untouched.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if len(samples) == 0:
        raise BadConfig("dropout_bursts needs a non-empty signal")
    duration_s = len(samples) / sample_rate_hz
    n_bursts = rng.poisson(config.burst_rate_per_10s * duration_s / 10.0)
    if n_bursts == 0:
        return samples.copy()
    centers = rng.integers(0, len(samples), size=n_bursts)
    half_width = config.burst_width_ms / 2000.0 * sample_rate_hz
    return zero_bursts(samples, centers, half_width)


def random_resample(samples, config: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Linearly resample the signal to a random target heart rate.

    Drawing rate r ~ U[lo, hi] gives stretch factor s = assumed/r; the output
    has round(s * len) samples with output[i] read at input position i/s.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if len(samples) < 2:
        raise BadConfig("random_resample needs at least 2 samples")
    lo, hi = config.hr_range_bpm
    rate = rng.uniform(lo, hi)
    stretch = config.hr_assumed_bpm / rate
    out_len = int(np.rint(stretch * len(samples)))
    positions = np.arange(out_len, dtype=np.float64) / stretch
    positions = np.clip(positions, 0.0, len(samples) - 1.0)
    return np.interp(positions, np.arange(len(samples), dtype=np.float64), samples)


def augment(record: EcgRecord, config: AugmentConfig, rng: np.random.Generator) -> EcgRecord:
    """Apply resampling then dropout bursts; label and rate are preserved."""
    if not config.enabled:
        return record
    samples = random_resample(record.samples, config, rng)
    samples = dropout_bursts(samples, record.sample_rate_hz, config, rng)
    suffix = int(rng.integers(0, 2**32))
    return EcgRecord(
        id=f"{record.id}#a{suffix:08x}",
        samples=samples,
        sample_rate_hz=record.sample_rate_hz,
        label=record.label,
    )
