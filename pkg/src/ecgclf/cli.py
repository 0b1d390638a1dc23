"""Command-line interface: preprocess, train, predict, cv, ensemble.

Every run resolves its configuration (defaults < config file < flags),
writes it to ``run.json`` next to the outputs, and exits 0 on success, 1 on
usage errors, 2 on data errors, 3 on numerical failures.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import struct
import sys
from pathlib import Path

import numpy as np

from .augment import AugmentConfig
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import DataError, EcgClfError, NumericalError
from .evaluation import (
    MetricsReport,
    build_ensemble,
    confusion_matrix,
    cross_validate,
    ensemble_predict_many,
    format_metrics_table,
)
from .network import ModelConfig
from .records import load_manifest, stratified_holdout, stratified_partition
from .spectrogram import preprocess
from .training import TrainConfig, predict_records, train_model

logger = logging.getLogger(__name__)

DEFAULTS = {
    "run": {"seed": 0, "format": "text", "fast": False},
    "model": {"arch": "cnn", "scale": 1.0, "dropout_p": 0.15},
    "train": {
        "batch_size": 20,
        "max_epochs": 500,
        "patience_epochs": 50,
        "lr": 0.001,
        "phase2_epochs": 100,
        "phase3_decay_every": 200,
        "phase3_decay_factor": 10.0,
        "k_folds": 5,
        "n_members": 5,
    },
    "augment": {
        "enabled": True,
        "burst_rate_per_10s": 2.0,
        "burst_width_ms": 50.0,
        "hr_lo": 60.0,
        "hr_hi": 120.0,
    },
    "spectrogram": {
        "window": 64,
        "hop": 32,
        "tukey_shape": 0.25,
        "eps": 1e-6,
        "normalize": True,
    },
}

# flag destination -> (section, key)
FLAG_MAP = {
    "seed": ("run", "seed"),
    "format": ("run", "format"),
    "fast": ("run", "fast"),
    "arch": ("model", "arch"),
    "scale": ("model", "scale"),
    "dropout_p": ("model", "dropout_p"),
    "batch_size": ("train", "batch_size"),
    "max_epochs": ("train", "max_epochs"),
    "patience": ("train", "patience_epochs"),
    "lr": ("train", "lr"),
    "phase2_epochs": ("train", "phase2_epochs"),
    "k": ("train", "k_folds"),
    "n_members": ("train", "n_members"),
    "augment": ("augment", "enabled"),
    "burst_rate": ("augment", "burst_rate_per_10s"),
    "burst_width_ms": ("augment", "burst_width_ms"),
    "window": ("spectrogram", "window"),
    "hop": ("spectrogram", "hop"),
    "tukey_shape": ("spectrogram", "tukey_shape"),
    "eps": ("spectrogram", "eps"),
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _coerce(value: str, like):
    if isinstance(like, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    return type(like)(value)


def _config_file_sections(path: Path) -> dict:
    """Read an INI config, or a run.json captured by an earlier run."""
    if path.suffix == ".json":
        payload = json.loads(path.read_text())
        sections = payload.get("config", payload)
        return {s: {k: str(v) for k, v in kv.items()} for s, kv in sections.items()}
    parser = configparser.ConfigParser()
    parser.read(path)
    return {s: dict(parser[s]) for s in parser.sections()}


def resolve_config(args: argparse.Namespace) -> dict:
    """defaults < config file < explicitly passed flags."""
    config = {section: dict(values) for section, values in DEFAULTS.items()}
    path = getattr(args, "config", None)
    if path:
        if not Path(path).exists():
            raise DataError(f"config file not found: {path}")
        for section, values in _config_file_sections(Path(path)).items():
            if section not in config:
                raise DataError(f"unknown config section [{section}]")
            for key, raw in values.items():
                if key not in config[section]:
                    raise DataError(f"unknown config key {section}.{key}")
                config[section][key] = _coerce(raw, DEFAULTS[section][key])
    for dest, (section, key) in FLAG_MAP.items():
        value = getattr(args, dest, None)
        if value is not None:
            config[section][key] = value
    hr_range = getattr(args, "hr_range", None)
    if hr_range is not None:
        lo, hi = (float(v) for v in hr_range.split(","))
        config["augment"]["hr_lo"] = lo
        config["augment"]["hr_hi"] = hi
    if getattr(args, "no_normalize", False):
        config["spectrogram"]["normalize"] = False
    return config


def write_config_file(config: dict, path: Path) -> None:
    parser = configparser.ConfigParser()
    for section, values in config.items():
        parser[section] = {k: repr(v) if isinstance(v, float) else str(v) for k, v in values.items()}
    with open(path, "w") as fh:
        parser.write(fh)


def _model_config(config: dict) -> ModelConfig:
    m = config["model"]
    return ModelConfig(arch=m["arch"], scale=float(m["scale"]), dropout_p=float(m["dropout_p"]))


def _train_config(config: dict) -> TrainConfig:
    t, a = config["train"], config["augment"]
    return TrainConfig(
        batch_size=int(t["batch_size"]),
        max_epochs=int(t["max_epochs"]),
        patience_epochs=int(t["patience_epochs"]),
        lr=float(t["lr"]),
        phase2_epochs=int(t["phase2_epochs"]),
        phase3_decay_every=int(t["phase3_decay_every"]),
        phase3_decay_factor=float(t["phase3_decay_factor"]),
        augment=AugmentConfig(
            burst_rate_per_10s=float(a["burst_rate_per_10s"]),
            burst_width_ms=float(a["burst_width_ms"]),
            hr_range_bpm=(float(a["hr_lo"]), float(a["hr_hi"])),
            enabled=bool(a["enabled"]),
        ),
        seed=int(config["run"]["seed"]),
    )


def _write_run_json(out_dir: Path, command: str, config: dict, argv) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"command": command, "argv": list(argv), "config": config}
    (out_dir / "run.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_dataset(args, config):
    if not args.manifest:
        raise DataError("--manifest is required")
    return load_manifest(args.manifest, data_root=args.data_root,
                         format=config["run"]["format"])


def cmd_preprocess(args, config, argv) -> int:
    out_dir = Path(args.out)
    _write_run_json(out_dir, "preprocess", config, argv)
    dataset = _load_dataset(args, config)
    s = config["spectrogram"]
    for rec in dataset.records:
        spec = preprocess(
            rec,
            window_samples=int(s["window"]),
            hop_samples=int(s["hop"]),
            shape=float(s["tukey_shape"]),
            eps=float(s["eps"]),
            do_normalize=bool(s["normalize"]),
        )
        if config["run"]["format"] == "bin":
            path = out_dir / f"{rec.id}.spec.bin"
            t, f = spec.frames.shape
            with open(path, "wb") as fh:
                fh.write(struct.pack("<II", t, f))
                fh.write(spec.frames.astype("<f4").tobytes())
        else:
            path = out_dir / f"{rec.id}.spec.csv"
            np.savetxt(path, spec.frames, delimiter=",", fmt="%.9e")
    print(f"wrote {len(dataset.records)} spectrograms to {out_dir}")
    return 0


def _train_val_split(dataset, args, config):
    labeled = dataset.labeled()
    fold_spec = getattr(args, "fold_spec", None)
    if fold_spec:
        try:
            k_str, fold_str = fold_spec.split(":")
            k, fold = int(k_str), int(fold_str)
        except ValueError as exc:
            raise DataError(f"--fold-spec must look like K:FOLD, got {fold_spec!r}") from exc
        assignment = stratified_partition(dataset, k, int(config["run"]["seed"]))
        by_id = dataset.by_id()
        train = [by_id[i] for i in assignment.train_ids(fold)]
        val = [by_id[i] for i in assignment.val_ids(fold)]
        return train, val
    return stratified_holdout(labeled, 1 / 6, int(config["run"]["seed"]))


def cmd_train(args, config, argv) -> int:
    out_path = Path(args.out)
    ckpt = out_path if out_path.suffix else out_path / "checkpoint.bin"
    _write_run_json(ckpt.parent, "train", config, argv)
    dataset = _load_dataset(args, config)
    train, val = _train_val_split(dataset, args, config)
    model, histories = train_model(
        _model_config(config), train, val, _train_config(config),
        seed=int(config["run"]["seed"]),
    )
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, ckpt)
    log_path = Path(args.log) if args.log else ckpt.with_suffix(".train.jsonl")
    with open(log_path, "w") as fh:
        for hist in histories:
            for row in hist.rows():
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    best = max(h.best_val_f1 for h in histories)
    print(f"saved checkpoint to {ckpt} (best val F1_avg {best:.4f})")
    return 0


def cmd_predict(args, config, argv) -> int:
    out_path = Path(args.out)
    _write_run_json(out_path.parent, "predict", config, argv)
    dataset = _load_dataset(args, config)
    models = [load_checkpoint(p) for p in args.model]
    records = list(dataset.records)
    if len(models) == 1:
        _, labels = predict_records(models[0], records, int(config["train"]["batch_size"]))
    else:
        labels, _ = ensemble_predict_many(models, records, int(config["train"]["batch_size"]))
    lines = [f"{rec.id},{label}" for rec, label in zip(records, labels)]
    out_path.write_text("\n".join(lines) + "\n")
    print(f"wrote {len(lines)} predictions to {out_path}")
    return 0


def _write_metrics(out_dir: Path, reports: dict[str, MetricsReport], per_fold=None) -> None:
    table = format_metrics_table(reports)
    if per_fold is not None:
        mean, sd = per_fold
        table += f"per-fold F1_avg: {100 * mean:.1f} +/- {100 * sd:.1f}\n"
    (out_dir / "metrics.txt").write_text(table)
    with open(out_dir / "metrics.jsonl", "w") as fh:
        for name, rep in reports.items():
            fh.write(json.dumps({"report": name, **rep.to_json_dict()}, sort_keys=True) + "\n")


def cmd_cv(args, config, argv) -> int:
    out_dir = Path(args.out)
    _write_run_json(out_dir, "cv", config, argv)
    dataset = _load_dataset(args, config)
    result = cross_validate(
        _model_config(config), dataset, _train_config(config),
        k=int(config["train"]["k_folds"]), seed=int(config["run"]["seed"]),
    )
    reports = {"pooled": result.pooled}
    for fold in result.folds:
        reports[f"fold{fold.fold}"] = fold.report
    _write_metrics(out_dir, reports, per_fold=result.per_fold_f1_avg())
    print(f"pooled F1_avg {result.pooled.f1_avg:.4f}; metrics in {out_dir}")
    return 0


def cmd_ensemble(args, config, argv) -> int:
    out_dir = Path(args.out)
    _write_run_json(out_dir, "ensemble", config, argv)
    dataset = _load_dataset(args, config)
    result = build_ensemble(
        dataset, _model_config(config), _train_config(config),
        n_members=int(config["train"]["n_members"]), seed=int(config["run"]["seed"]),
    )
    for i, model in enumerate(result.models):
        save_checkpoint(model, out_dir / f"member{i}.ckpt")
    records = list(dataset.records)
    labels, votes = ensemble_predict_many(result.models, records,
                                          int(config["train"]["batch_size"]))
    with open(out_dir / "votes.csv", "w") as fh:
        fh.write("id," + ",".join(f"member{i}" for i in range(len(result.models))) + ",label\n")
        for rec, vote, label in zip(records, votes, labels):
            fh.write(f"{rec.id}," + ",".join(vote) + f",{label}\n")
    labeled = [r for r in records if r.label is not None]
    if labeled:
        idx = {r.id: lab for r, lab in zip(records, labels)}
        cm = confusion_matrix([r.label for r in labeled], [idx[r.id] for r in labeled])
        _write_metrics(out_dir, {"ensemble": MetricsReport.from_confusion(cm)})
    print(f"saved {len(result.models)} checkpoints and votes to {out_dir}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="ecgclf", description="ECG rhythm classification")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_shared(p):
        p.add_argument("--manifest")
        p.add_argument("--data-root", dest="data_root")
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--config")
        p.add_argument("--format", choices=["text", "bin"])
        p.add_argument("--fast", action="store_const", const=True,
                       help="permit nondeterministic parallelism (reserved)")
        p.add_argument("--verbose", action="store_true")

    def add_model(p):
        p.add_argument("--arch", choices=["cnn", "crnn"])
        p.add_argument("--scale", type=float)
        p.add_argument("--dropout-p", dest="dropout_p", type=float)

    def add_train(p):
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--max-epochs", dest="max_epochs", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--phase2-epochs", dest="phase2_epochs", type=int)
        p.add_argument("--augment", choices=["on", "off"])
        p.add_argument("--burst-rate", dest="burst_rate", type=float)
        p.add_argument("--burst-width-ms", dest="burst_width_ms", type=float)
        p.add_argument("--hr-range", dest="hr_range", help="lo,hi in bpm")

    p = sub.add_parser("preprocess", help="write spectrograms for a manifest")
    add_shared(p)
    p.add_argument("--window", type=int)
    p.add_argument("--hop", type=int)
    p.add_argument("--tukey-shape", dest="tukey_shape", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--no-normalize", dest="no_normalize", action="store_true")

    p = sub.add_parser("train", help="train one model")
    add_shared(p)
    add_model(p)
    add_train(p)
    p.add_argument("--fold-spec", dest="fold_spec", help="K:FOLD stratified split")
    p.add_argument("--log", help="epoch log path (jsonl)")

    p = sub.add_parser("predict", help="predict labels with checkpoints")
    add_shared(p)
    p.add_argument("--model", nargs="+", required=True, help="one or more checkpoints")

    p = sub.add_parser("cv", help="stratified k-fold cross-validation")
    add_shared(p)
    add_model(p)
    add_train(p)
    p.add_argument("--k", type=int)

    p = sub.add_parser("ensemble", help="train a majority-vote ensemble")
    add_shared(p)
    add_model(p)
    add_train(p)
    p.add_argument("--n-members", dest="n_members", type=int)
    return parser


COMMANDS = {
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "predict": cmd_predict,
    "cv": cmd_cv,
    "ensemble": cmd_ensemble,
}


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if getattr(args, "augment", None) is not None:
        args.augment = args.augment == "on"
    try:
        config = resolve_config(args)
        return COMMANDS[args.command](args, config, argv)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except EcgClfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
