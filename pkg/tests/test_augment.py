import numpy as np
import pytest

from ecgclf.augment import (
    AugmentConfig,
    augment,
    dropout_bursts,
    random_resample,
    zero_bursts,
)
from ecgclf.errors import BadConfig
from ecgclf.records import EcgRecord


class TestDropoutBursts:
    def test_zero_rate_is_identity(self):
        rng = np.random.default_rng(0)
        x = np.random.default_rng(1).standard_normal(3000)
        cfg = AugmentConfig(burst_rate_per_10s=0.0)
        out = dropout_bursts(x, 300.0, cfg, rng)
        np.testing.assert_array_equal(out, x)

    def test_window_arithmetic_at_center_1500(self):
        # 50 ms at 300 Hz covers 15 samples: center +/- 7 inclusive
        x = np.ones(3000)
        out = zero_bursts(x, [1500], half_width_samples=7.5)
        zeros = np.flatnonzero(out == 0.0)
        assert zeros.tolist() == list(range(1493, 1508))
        assert len(zeros) == 15

    def test_overlapping_bursts_union(self):
        x = np.ones(3000)
        out = zero_bursts(x, [100, 105], half_width_samples=7.5)
        zeros = np.flatnonzero(out == 0.0)
        assert zeros.tolist() == list(range(93, 113))  # union of the two windows
        assert len(zeros) <= 30

    def test_non_burst_samples_bit_identical(self):
        rng = np.random.default_rng(7)
        x = np.random.default_rng(8).standard_normal(6000)
        cfg = AugmentConfig(burst_rate_per_10s=5.0)
        # replicate the draws to predict the zero windows independently
        probe = np.random.default_rng(7)
        n_bursts = probe.poisson(cfg.burst_rate_per_10s * (6000 / 300.0) / 10.0)
        centers = probe.integers(0, 6000, size=n_bursts)
        expected_zero = set()
        for c in centers:
            lo = int(np.ceil(c - 7.5))
            hi = int(np.floor(c + 7.5))
            expected_zero.update(range(max(0, lo), min(5999, hi) + 1))
        out = dropout_bursts(x, 300.0, cfg, rng)
        assert n_bursts > 0
        for i in range(6000):
            if i in expected_zero:
                assert out[i] == 0.0
            else:
                assert out[i] == x[i]


class TestRandomResample:
    def test_identity_when_rate_is_assumed(self):
        x = np.random.default_rng(0).standard_normal(3000)
        cfg = AugmentConfig(hr_range_bpm=(80.0, 80.0))
        out = random_resample(x, cfg, np.random.default_rng(1))
        assert np.array_equal(out, x)

    def test_compression_at_120(self):
        x = np.random.default_rng(0).standard_normal(3000)
        cfg = AugmentConfig(hr_range_bpm=(120.0, 120.0))
        out = random_resample(x, cfg, np.random.default_rng(1))
        assert len(out) == 2000

    def test_stretch_at_60(self):
        x = np.random.default_rng(0).standard_normal(3000)
        cfg = AugmentConfig(hr_range_bpm=(60.0, 60.0))
        out = random_resample(x, cfg, np.random.default_rng(1))
        assert len(out) == 4000

    def test_beat_intervals_shrink_when_compressed(self):
        # synthetic pulse train: spikes every 225 samples (80 bpm at 300 Hz)
        x = np.zeros(4500)
        x[::225] = 1.0
        cfg = AugmentConfig(hr_range_bpm=(120.0, 120.0))
        out = random_resample(x, cfg, np.random.default_rng(0))
        peaks = np.flatnonzero(out > 0.5)
        gaps = np.diff(peaks)
        assert np.all(np.abs(gaps - 150) <= 1)  # 225 * 2/3

    def test_stretch_distribution_matches_pushforward(self):
        # KS distance between empirical stretch factors and the CDF of
        # s = 80/R with R ~ U[60, 120]: F(s) = (120 - 80/s) / 60
        cfg = AugmentConfig()
        rng = np.random.default_rng(1234)
        n_in = 3000
        x = np.zeros(n_in)
        draws = 10_000
        stretches = np.empty(draws)
        for i in range(draws):
            stretches[i] = len(random_resample(x, cfg, rng)) / n_in
        s = np.sort(stretches)
        cdf = (120.0 - 80.0 / s) / 60.0
        n = len(s)
        upper = np.max(np.arange(1, n + 1) / n - cdf)
        lower = np.max(cdf - np.arange(0, n) / n)
        ks = max(upper, lower)
        assert ks < 0.02
        assert s[0] >= 2 / 3 - 1e-3 and s[-1] <= 4 / 3 + 1e-3


class TestAugment:
    def make(self, n=3000, label="N"):
        return EcgRecord(id="r", samples=np.random.default_rng(0).standard_normal(n), label=label)

    def test_disabled_is_identity(self):
        rec = self.make()
        out = augment(rec, AugmentConfig(enabled=False), np.random.default_rng(0))
        assert out is rec

    def test_length_bounds(self):
        rec = self.make(2999)
        cfg = AugmentConfig()
        for seed in range(20):
            out = augment(rec, cfg, np.random.default_rng(seed))
            assert np.ceil(2 / 3 * 2999) - 1 <= len(out) <= np.floor(4 / 3 * 2999) + 1

    def test_deterministic_under_seed(self):
        rec = self.make()
        cfg = AugmentConfig()
        a = augment(rec, cfg, np.random.default_rng(99))
        b = augment(rec, cfg, np.random.default_rng(99))
        assert a.id == b.id
        assert np.array_equal(a.samples, b.samples)

    def test_label_and_rate_preserved(self):
        rec = self.make(label="A")
        out = augment(rec, AugmentConfig(), np.random.default_rng(0))
        assert out.label == "A"
        assert out.sample_rate_hz == rec.sample_rate_hz
        assert out.id.startswith("r#a")


class TestAugmentConfig:
    def test_bad_hr_range(self):
        with pytest.raises(BadConfig):
            AugmentConfig(hr_range_bpm=(0.0, 100.0))
        with pytest.raises(BadConfig):
            AugmentConfig(hr_range_bpm=(60.0, 400.0))

    def test_bad_width(self):
        with pytest.raises(BadConfig):
            AugmentConfig(burst_width_ms=0.0)
