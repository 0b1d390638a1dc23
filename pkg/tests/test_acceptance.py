"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines; every tolerance is pinned here.
"""
import time

import numpy as np
import pytest

from helpers import check_gradients
from synthetic import pulse_train_corpus
from test_autodiff import OPS
from test_layers import lstm_stack_gradcheck

from ecgclf import autodiff as ad
from ecgclf.augment import AugmentConfig, dropout_bursts, random_resample
from ecgclf.cli import run as cli_run
from ecgclf.evaluation import ensemble_splits, f1_avg_from_scores
from ecgclf.network import ModelConfig, build
from ecgclf.records import Dataset, EcgRecord, stratified_partition, write_record
from ecgclf.spectrogram import preprocess
from ecgclf.training import (
    TrainConfig,
    _validation_scores,
    fit_with_early_stopping,
    phase3_lr,
    train_crnn_three_phase,
)


def report(name: str, ok: bool, detail: str = ""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" -- {detail}" if detail else ""))
    assert ok, f"{name}: {detail}"


def split_corpus(dataset, seed=0):
    assignment = stratified_partition(dataset, 5, seed=seed)
    by_id = dataset.by_id()
    val = [by_id[i] for i in assignment.test_ids(0)]
    train = [by_id[i] for i, f in assignment.fold_of.items() if f != 0]
    return train, val


class TestMetricOracle:
    def test_reference_row_means(self):
        t0 = time.time()
        rows = [
            ("cnn augmented", (87.8, 79.0, 70.1), 78.96666666666667, 79.0),
            ("crnn augmented", (88.8, 76.4, 72.6), 79.26666666666667, 79.2),
            ("cnn no-aug", (88.3, 69.9, 69.1), 75.76666666666667, 75.8),
            ("crnn no-aug", (87.4, 69.9, 66.5), 74.6, 74.6),
        ]
        ok = True
        details = []
        for name, scores, mean, reported in rows:
            got = f1_avg_from_scores([s / 100.0 for s in scores]) * 100.0
            # exact row mean, and agreement with the reported overall to one
            # decimal within the inputs' own rounding slack (class scores are
            # rounded to one decimal, so the two can sit up to 0.07 apart)
            row_ok = abs(got - mean) < 5e-3 and abs(got - reported) <= 0.07
            ok &= row_ok
            details.append(f"{name}: {got:.2f} vs reported {reported}")
        elapsed = time.time() - t0
        ok &= elapsed < 1.0
        report("metric oracle", ok, "; ".join(details) + f" ({elapsed:.2f}s)")


class TestShapeOracle:
    def test_full_scale_ladders(self):
        t0 = time.time()
        rng = np.random.default_rng(0)
        ok = True
        details = []
        for arch, blocks, channels_last, flat in (
            ("cnn", 6, 224, 224),
            ("crnn", 4, 160, 480),
        ):
            cfg = ModelConfig(arch=arch)
            assert cfg.channel_ladder()[0] == 64
            assert cfg.channel_ladder()[-1] == channels_last
            model = build(cfg, seed=0)
            for n_samples in (2700, 3000, 18300):
                rec = EcgRecord(id="x", samples=rng.standard_normal(n_samples))
                spec = preprocess(rec)
                t_frames = (n_samples - 64) // 32 + 1
                ok &= spec.frames.shape == (t_frames, 33)
                frames = spec.frames.astype(np.float32)[None]
                lengths = np.array([t_frames])
                x = ad.reshape(ad.Tensor(frames), frames.shape + (1,))
                f_expect, t_expect = 33, t_frames
                for block, c_expect in zip(model.blocks, cfg.channel_ladder()):
                    x, lengths = block(x, lengths, rng, train=False)
                    t_expect = -(-t_expect // 2)
                    f_expect = -(-f_expect // 2)
                    ok &= int(lengths[0]) == t_expect
                    ok &= x.data.shape[2] == f_expect
                    ok &= x.data.shape[3] == c_expect
                b, t, f, c = x.data.shape
                flat_dim = f * c
                ok &= flat_dim == flat
                if arch == "crnn":
                    feats = ad.reshape(x, (b, t, flat_dim))
                    agg = model.lstm(feats, lengths, rng, train=False)
                    ok &= agg.data.shape == (1, 200)
                probs = model.predict_proba(frames, np.array([t_frames]))
                ok &= probs.shape == (1, 4)
                details.append(f"{arch}@{n_samples}: T'={int(lengths[0])} F'={f} C={c}")
        elapsed = time.time() - t0
        ok &= elapsed < 10.0
        report("shape oracle", ok, "; ".join(details[:4]) + f" ... ({elapsed:.1f}s)")


class TestGradientSuite:
    def test_all_ops_finite_difference(self):
        t0 = time.time()
        worst = {}
        for name, case in sorted(OPS.items()):
            w = 0.0
            for trial in range(20):
                rng = np.random.default_rng(1000 * trial + hash(name) % 1000)
                build_fn, tensors = case(rng)
                errs = check_gradients(build_fn, tensors, rng)
                w = max(w, max(errs.values()))
            worst[name] = w
        lstm_worst = lstm_stack_gradcheck(n_instances=20)
        elapsed = time.time() - t0
        ok = all(v < 1e-4 for v in worst.values()) and lstm_worst < 1e-3 and elapsed < 300
        detail = (
            f"{len(worst)} ops, worst {max(worst.values()):.2e}; "
            f"lstm stack {lstm_worst:.2e} ({elapsed:.0f}s)"
        )
        report("gradient suite", ok, detail)


SMOKE_CORPUS = pulse_train_corpus(200, min_s=9.0, max_s=30.0, seed=1)


class TestConvergenceSmoke:
    def smoke_config(self):
        return TrainConfig(
            batch_size=20,
            max_epochs=60,
            patience_epochs=20,
            phase2_epochs=60,
            lr=0.003,
            augment=AugmentConfig(enabled=True),
            seed=0,
            target_val_accuracy=0.95,
        )

    def test_cnn_reaches_95_percent(self):
        t0 = time.time()
        train, val = split_corpus(SMOKE_CORPUS)
        model = build(ModelConfig(arch="cnn", scale=1 / 8), seed=0)
        history = fit_with_early_stopping(model, train, val, self.smoke_config(), phase="cnn")
        reached = [e.epoch for e in history.epochs if e.val_accuracy >= 0.95]
        _, final_acc = _validation_scores(model, val, 20)
        elapsed = time.time() - t0
        ok = bool(reached) and reached[0] <= 60 and final_acc >= 0.95 and elapsed < 1800
        report(
            "convergence smoke (cnn)",
            ok,
            f"95% at epoch {reached[0] if reached else '-'}; final val acc "
            f"{final_acc:.3f} ({elapsed:.0f}s)",
        )

    def test_crnn_three_phase_reaches_95_percent(self):
        t0 = time.time()
        train, val = split_corpus(SMOKE_CORPUS)
        model, histories = train_crnn_three_phase(
            ModelConfig(arch="crnn", scale=1 / 8), train, val, self.smoke_config(), seed=0
        )
        _, final_acc = _validation_scores(model, val, 20)
        epochs_used = [len(h.epochs) for h in histories]
        elapsed = time.time() - t0
        ok = (
            final_acc >= 0.95
            and all(n <= 60 for n in epochs_used)
            and elapsed < 1800
        )
        report(
            "convergence smoke (3-phase crnn)",
            ok,
            f"final val acc {final_acc:.3f}; epochs per phase {epochs_used} ({elapsed:.0f}s)",
        )


class TestAugmentationProperties:
    def test_stretch_distribution_and_bursts(self):
        config = AugmentConfig()
        rng = np.random.default_rng(1234)
        n_in = 3000
        zeros_in = np.zeros(n_in)
        draws = 10_000
        stretches = np.array(
            [len(random_resample(zeros_in, config, rng)) / n_in for _ in range(draws)]
        )
        s = np.sort(stretches)
        cdf = (120.0 - 80.0 / s) / 60.0
        steps = np.arange(1, draws + 1) / draws
        ks = max(np.max(steps - cdf), np.max(cdf - (steps - 1.0 / draws)))

        # burst windows: replicate the seeded draws to predict the zero set
        x = np.random.default_rng(8).standard_normal(6000)
        seed = 77
        probe = np.random.default_rng(seed)
        n_bursts = probe.poisson(config.burst_rate_per_10s * (6000 / 300.0) / 10.0)
        centers = probe.integers(0, 6000, size=n_bursts)
        out = dropout_bursts(x, 300.0, config, np.random.default_rng(seed))
        window_ok = n_bursts > 0
        expected_zero = set()
        for c in centers:
            lo, hi = int(np.ceil(c - 7.5)), int(np.floor(c + 7.5))
            window_ok &= hi - lo + 1 == 15  # exactly 15 samples at 300 Hz
            expected_zero.update(range(max(0, lo), min(5999, hi) + 1))
        bit_ok = all(
            (out[i] == 0.0) if i in expected_zero else (out[i] == x[i])
            for i in range(6000)
        )
        ok = ks < 0.02 and window_ok and bit_ok
        report(
            "augmentation properties",
            ok,
            f"KS {ks:.4f} < 0.02; {n_bursts} bursts of exactly 15 samples; "
            f"non-burst samples bit-identical: {bit_ok}",
        )


class TestProtocolProperties:
    def test_phase2_freeze_and_lr_schedule(self):
        rng = np.random.default_rng(0)
        records = [
            EcgRecord(id=f"r{i:02d}", samples=rng.standard_normal(2100), label="NA"[i % 2])
            for i in range(10)
        ]
        val = [
            EcgRecord(id=f"v{i}", samples=rng.standard_normal(2100), label="NA"[i % 2])
            for i in range(4)
        ]
        captured = {}

        def on_phase_end(name, mdl):
            captured[name] = {k: v.data.copy() for k, v in mdl.conv_params().items()}

        config = TrainConfig(
            batch_size=5, max_epochs=2, patience_epochs=2, phase2_epochs=2,
            augment=AugmentConfig(enabled=False), seed=0,
        )
        _, histories = train_crnn_three_phase(
            ModelConfig(arch="crnn", scale=1 / 16), records, val, config, seed=0,
            on_phase_end=on_phase_end,
        )
        freeze_ok = all(
            np.array_equal(captured["phase1"][k], captured["phase2"][k])
            for k in captured["phase1"]
        )
        lr_ok = (
            phase3_lr(0.001, 1) == pytest.approx(0.001)
            and phase3_lr(0.001, 201) == pytest.approx(0.0001)
            and phase3_lr(0.001, 401) == pytest.approx(0.00001)
        )
        logged = [e.lr for h in histories for e in h.epochs if e.phase == "phase3"]
        lr_ok &= all(lr == pytest.approx(phase3_lr(0.001, i + 1)) for i, lr in enumerate(logged))
        report(
            "protocol: phase-2 freeze + phase-3 lr schedule",
            freeze_ok and lr_ok,
            f"conv bit-identical: {freeze_ok}; lr(1,201,401) = 0.001/0.0001/0.00001",
        )

    def test_ensemble_partition_and_training_fraction(self):
        rng = np.random.default_rng(0)
        records = []
        for cls, count in (("N", 30), ("A", 30), ("O", 15), ("~", 15)):
            for i in range(count):
                records.append(
                    EcgRecord(id=f"{cls}{i:03d}", samples=rng.standard_normal(300), label=cls)
                )
        ds = Dataset(records=tuple(records))
        splits = ensemble_splits(ds, 5, seed=0)
        all_val = sorted(i for _, v in splits for i in v)
        partition_ok = all_val == sorted(r.id for r in ds.labeled())

        assignment = stratified_partition(ds, 5, seed=0)
        frac_ok = True
        for fold in range(5):
            train_ids = assignment.train_ids(fold)
            for cls, count in (("N", 30), ("A", 30), ("O", 15), ("~", 15)):
                n_train = sum(1 for i in train_ids if i.startswith(cls))
                frac_ok &= abs(n_train - count * 2 / 3) <= 1
        report(
            "protocol: ensemble partition + 2/3 training fraction",
            partition_ok and frac_ok,
            f"val subsets partition dataset: {partition_ok}; per-fold per-class "
            f"training fraction 2/3 +/- 1: {frac_ok}",
        )


class TestDeterminism:
    def test_cv_byte_identical(self, tmp_path):
        rng = np.random.default_rng(3)
        data = tmp_path / "data"
        data.mkdir()
        rows = []
        for i in range(12):
            rid = f"rec{i:02d}"
            rec = EcgRecord(id=rid, samples=rng.standard_normal(2100), label="NA"[i % 2])
            write_record(rec, data / f"{rid}.ecg")
            rows.append(f"{rid},{rid}.ecg,{'NA'[i % 2]}")
        manifest = tmp_path / "manifest.csv"
        manifest.write_text("\n".join(rows) + "\n")
        outputs = []
        for name in ("a", "b"):
            out = tmp_path / name
            code = cli_run([
                "cv", "--manifest", str(manifest), "--data-root", str(data),
                "--out", str(out), "--k", "2", "--seed", "11", "--scale", "0.0625",
                "--max-epochs", "2", "--patience", "2", "--augment", "on",
                "--batch-size", "6",
            ])
            assert code == 0
            outputs.append(
                ((out / "metrics.txt").read_bytes(), (out / "metrics.jsonl").read_bytes())
            )
        ok = outputs[0] == outputs[1]
        report("determinism: cv byte-identical", ok,
               f"metrics.txt and metrics.jsonl identical across runs: {ok}")
