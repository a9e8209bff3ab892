"""Experiment configuration, the run pipeline, and the command-line tool.

Configs are JSON; numeric threat-model fields accept exact rational strings
like "8/255" and keep them verbatim in the stored config and manifest.
Every run writes a self-contained directory:

    <out>/<name>/
        config.json     exact configuration the run used
        manifest.json   config hash, code version, wall time
        epochs.csv      one row per epoch
        batches.csv     optional per-batch rows
        snapshots/      best + final parameters
        probes/         scheduled probe outputs
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, probes
from .attacks import DeepFoolConfig, deepfool_l2, make_attack, parse_attack_spec, parse_fraction
from .data import Dataset, gen_blobs, gen_rings, load_idx, subsample
from .models import Classifier, ModelSnapshot, build_mlp, load_snapshot, save_snapshot
from .seeds import derive_seed
from .trainer import MetricsTrace, TrainConfig, TrainingDivergedError, evaluate, train

PROBE_KINDS = (
    "diversity",
    "input_grad_l2",
    "df2_stats",
    "scaled_accuracy_curve",
    "cross_section",
)


class ConfigError(ValueError):
    """Configuration rejected; message names the offending field."""


def _require(cfg: dict, key: str, kind, where: str):
    if key not in cfg:
        raise ConfigError(f"{where}.{key}: missing required field")
    value = cfg[key]
    if kind is float:
        if isinstance(value, str):
            try:
                return parse_fraction(value)
            except ValueError as exc:
                raise ConfigError(f"{where}.{key}: {exc}") from exc
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{where}.{key}: expected a number")
        return float(value)
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise ConfigError(f"{where}.{key}: expected {kind.__name__}")
    return value


@dataclass
class ExperimentConfig:
    """Validated experiment description plus the raw dict it came from."""

    name: str
    seed: int
    dataset: dict
    model: dict
    train: TrainConfig
    probe_jobs: list[dict]
    raw: dict


def parse_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("top level: expected a JSON object")
    name = _require(raw, "name", str, "config")
    if not name or any(c in name for c in "/\\"):
        raise ConfigError("config.name: must be a non-empty path-safe string")
    seed = _require(raw, "seed", int, "config")
    if seed < 0:
        raise ConfigError("config.seed: must be non-negative")

    ds = _require(raw, "dataset", dict, "config")
    kind = _require(ds, "kind", str, "dataset")
    if kind not in ("blobs", "rings", "idx"):
        raise ConfigError(f"dataset.kind: unknown kind {kind!r}")
    if kind == "blobs":
        for key, typ in (
            ("num_classes", int), ("dim", int), ("per_class", int),
            ("test_per_class", int), ("separation", float), ("noise_sigma", float),
        ):
            _require(ds, key, typ, "dataset")
    elif kind == "rings":
        _require(ds, "per_class", int, "dataset")
        _require(ds, "test_per_class", int, "dataset")
        _require(ds, "noise_sigma", float, "dataset")
        radii = _require(ds, "radii", list, "dataset")
        if len(radii) < 2:
            raise ConfigError("dataset.radii: need at least 2 radii")
    else:
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            _require(ds, key, str, "dataset")

    model = _require(raw, "model", dict, "config")
    hidden = _require(model, "hidden", list, "model")
    if not all(isinstance(h, int) and not isinstance(h, bool) and h > 0 for h in hidden):
        raise ConfigError("model.hidden: expected a list of positive ints")

    tr = _require(raw, "train", dict, "config")
    try:
        train_cfg = TrainConfig(
            epochs=_require(tr, "epochs", int, "train"),
            batch_size=tr.get("batch_size", 32),
            base_lr=_require(tr, "base_lr", float, "train") if "base_lr" in tr else 0.1,
            lr_decay_epochs=tuple(tr.get("lr_decay_epochs", ())),
            lr_decay_factor=tr.get("lr_decay_factor", 10.0),
            momentum=tr.get("momentum", 0.9),
            weight_decay=tr.get("weight_decay", 5e-4),
            attack_spec=tr.get("attack", "none"),
            eval_attack_spec=tr.get("eval_attack", ""),
            seed=seed,
            probe_sample_size=tr.get("probe_sample_size", 512),
            record_batches=tr.get("record_batches", False),
        )
    except ValueError as exc:
        raise ConfigError(f"train: {exc}") from exc

    jobs = raw.get("probes", [])
    if not isinstance(jobs, list):
        raise ConfigError("config.probes: expected a list of probe jobs")
    for i, job in enumerate(jobs):
        if not isinstance(job, dict):
            raise ConfigError(f"probes[{i}]: expected an object")
        which = _require(job, "which", str, f"probes[{i}]")
        if which not in PROBE_KINDS:
            raise ConfigError(f"probes[{i}].which: unknown probe {which!r}")
        epochs = _require(job, "epochs", list, f"probes[{i}]")
        if not all(isinstance(e, int) and not isinstance(e, bool) and e >= 0 for e in epochs):
            raise ConfigError(f"probes[{i}].epochs: expected non-negative ints")
        if "attack" in job:
            try:
                parse_attack_spec(job["attack"])
            except ValueError as exc:
                raise ConfigError(f"probes[{i}].attack: {exc}") from exc

    return ExperimentConfig(name, seed, ds, model, train_cfg, jobs, raw)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return parse_config(raw)


def build_split(cfg: ExperimentConfig, split: str) -> Dataset:
    """Materialize the train or test split with a split-specific stream."""
    ds = cfg.dataset
    kind = ds["kind"]
    tag = {"train": 1, "test": 2}[split]
    seed = derive_seed(cfg.seed, tag)
    if kind == "blobs":
        per = ds["per_class"] if split == "train" else ds["test_per_class"]
        return gen_blobs(
            num_classes=ds["num_classes"],
            dim=ds["dim"],
            per_class=per,
            separation=_num(ds["separation"]),
            noise_sigma=_num(ds["noise_sigma"]),
            seed=seed,
        )
    if kind == "rings":
        per = ds["per_class"] if split == "train" else ds["test_per_class"]
        return gen_rings(
            per_class=per,
            radii=[_num(r) for r in ds["radii"]],
            noise_sigma=_num(ds["noise_sigma"]),
            seed=seed,
            dim=ds.get("dim", 2),
        )
    return load_idx(ds[f"{split}_images"], ds[f"{split}_labels"])


def _num(value) -> float:
    return parse_fraction(value) if isinstance(value, str) else float(value)


def build_model(cfg: ExperimentConfig, input_dim: int, num_classes: int) -> Classifier:
    hidden = cfg.model["hidden"]
    activation = cfg.model.get("activation", "relu")
    dims = [input_dim, *hidden, num_classes]
    specs = [
        (dims[i], dims[i + 1], activation if i < len(dims) - 2 else "none")
        for i in range(len(dims) - 1)
    ]
    return build_mlp(specs, derive_seed(cfg.seed, 3))


def _probe_attack_spec(job: dict, cfg: ExperimentConfig) -> str:
    spec = job.get("attack", cfg.train.attack_spec)
    if parse_attack_spec(spec).is_none:
        raise ConfigError(
            f"probe {job['which']!r} needs an attack spec (training attack is 'none')"
        )
    return spec


def _run_probe_job(job, cfg, classifier, test_ds, epoch, probes_dir: Path) -> None:
    which = job["which"]
    stem = probes_dir / f"{which}_ep{epoch}"
    seed = derive_seed(cfg.seed, 8000 + epoch, PROBE_KINDS.index(which))
    if which == "diversity":
        idx = job.get("example_index", 0)
        fn = make_attack(_probe_attack_spec(job, cfg))
        x, y = test_ds.inputs[idx], int(test_ds.labels[idx])
        a = fn(classifier, x, y, derive_seed(seed, 1))
        b = fn(classifier, x, y, derive_seed(seed, 2))
        value = probes.diversity(a.delta, b.delta)
        _write_json(stem.with_suffix(".json"), {"diversity": value, "example_index": idx})
    elif which == "input_grad_l2":
        sample = subsample(test_ds, job.get("sample_size", cfg.train.probe_sample_size), seed)
        value = probes.input_grad_l2(classifier, sample)
        _write_json(stem.with_suffix(".json"), {"input_grad_l2_mean": value})
    elif which == "df2_stats":
        sample = subsample(test_ds, job.get("sample_size", cfg.train.probe_sample_size), seed)
        iters, norm, fooled = probes.df2_stats(classifier, sample)
        _write_json(
            stem.with_suffix(".json"),
            {"df2_iters_mean": iters, "df2_norm_mean": norm, "df2_fooled_fraction": fooled},
        )
    elif which == "scaled_accuracy_curve":
        sample = subsample(test_ds, job.get("sample_size", cfg.train.probe_sample_size), seed)
        fractions = job.get("fractions", [i / 10 for i in range(11)])
        curve = probes.scaled_accuracy_curve(
            classifier, sample, _probe_attack_spec(job, cfg), fractions,
            seed=seed, epoch_tag=str(epoch),
        )
        probes.write_accuracy_curve_csv(curve, stem.with_suffix(".csv"))
    else:
        idx = job.get("example_index", 0)
        x, y = test_ds.inputs[idx], int(test_ds.labels[idx])
        margin_axis = deepfool_l2(classifier, x, DeepFoolConfig(), y=y).perturbation.delta
        attack_pert = make_attack(_probe_attack_spec(job, cfg))(classifier, x, y, seed)
        if np.linalg.norm(margin_axis) == 0.0 or np.linalg.norm(attack_pert.delta) == 0.0:
            _write_json(stem.with_suffix(".json"), {"skipped": "zero axis vector"})
            return
        lo_hi = job.get("coord_range", [-1.5, 1.5])
        grid = probes.cross_section(
            classifier, x, margin_axis, attack_pert.delta,
            coord_range=(float(lo_hi[0]), float(lo_hi[1])),
            resolution=job.get("resolution", 101),
            true_label=y,
        )
        probes.write_cross_section_csv(grid, stem.with_suffix(".csv"))
        probes.write_cross_section_sidecar(grid, stem.with_suffix(".json"), anchor_index=idx)


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run(config: ExperimentConfig, out_dir) -> Path:
    """Execute a full experiment; returns the run directory."""
    started = time.monotonic()
    run_dir = Path(out_dir) / config.name
    (run_dir / "snapshots").mkdir(parents=True, exist_ok=True)
    probes_dir = run_dir / "probes"
    probes_dir.mkdir(exist_ok=True)

    config_text = json.dumps(config.raw, indent=2) + "\n"
    (run_dir / "config.json").write_text(config_text)

    train_ds = build_split(config, "train")
    test_ds = build_split(config, "test")
    classifier = build_model(config, train_ds.input_dim, train_ds.num_classes)

    schedule: dict[int, list[dict]] = {}
    for job in config.probe_jobs:
        for epoch in job["epochs"]:
            schedule.setdefault(epoch, []).append(job)

    def on_epoch(clf, epoch):
        for job in schedule.get(epoch, ()):
            _run_probe_job(job, config, clf, test_ds, epoch, probes_dir)

    classifier, trace, best = train(config.train, classifier, train_ds, test_ds, on_epoch=on_epoch)

    trace.write_csv(run_dir / "epochs.csv")
    if trace.batches:
        trace.write_batches_csv(run_dir / "batches.csv")
    save_snapshot(best, run_dir / "snapshots" / "best.colb")
    final = ModelSnapshot.from_classifier(classifier, config.train.epochs - 1, "final")
    save_snapshot(final, run_dir / "snapshots" / "final.colb")

    manifest = {
        "name": config.name,
        "config": config.raw,
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "code_version": __version__,
        "wall_time_seconds": time.monotonic() - started,
        "best_epoch": best.epoch,
    }
    _write_json(run_dir / "manifest.json", manifest)
    return run_dir


def _load_with_override(path, seed_override) -> ExperimentConfig:
    cfg = load_config(path)
    if seed_override is None:
        return cfg
    raw = dict(cfg.raw)
    raw["seed"] = seed_override
    return parse_config(raw)


def _cmd_train(args) -> int:
    cfg = _load_with_override(args.config, args.seed)
    run_dir = run(cfg, args.out)
    print(run_dir)
    return 0


def _cmd_eval(args) -> int:
    cfg = _load_with_override(args.config, args.seed)
    snapshot = load_snapshot(args.snapshot)
    classifier = snapshot.to_classifier()
    dataset = build_split(cfg, args.split)
    acc = evaluate(classifier, dataset, args.attack, seed=derive_seed(cfg.seed, 11))
    print(json.dumps({"attack": args.attack, "split": args.split, "accuracy": acc}))
    return 0


def _cmd_probe(args) -> int:
    cfg = _load_with_override(args.config, args.seed)
    snapshot = load_snapshot(args.snapshot)
    classifier = snapshot.to_classifier()
    test_ds = build_split(cfg, "test")
    job = {"which": args.which, "epochs": [], "example_index": args.example}
    if args.attack:
        job["attack"] = args.attack
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _run_probe_job(job, cfg, classifier, test_ds, snapshot.epoch, out_dir)
    stem = out_dir / f"{args.which}_ep{snapshot.epoch}"
    for ext in (".json", ".csv"):
        if stem.with_suffix(ext).exists():
            print(stem.with_suffix(ext))
    return 0


def _cmd_cross_section(args) -> int:
    args.which = "cross_section"
    return _cmd_probe(args)


def _cmd_detect_co(args) -> int:
    trace = MetricsTrace.read_csv(args.csv)
    events = probes.detect_co(
        trace, window=args.window, strong_drop=args.strong_drop, weak_rise=args.weak_rise
    )
    print(json.dumps([vars(e) for e in events], indent=2))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="advlab",
        description="Train, evaluate, and probe small robust classifiers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a full experiment from a JSON config")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", default="runs")
    p_train.add_argument("--seed", type=int, default=None, help="override config seed")
    p_train.set_defaults(fn=_cmd_train)

    p_eval = sub.add_parser("eval", help="accuracy of a snapshot under an attack")
    p_eval.add_argument("--snapshot", required=True)
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--attack", required=True)
    p_eval.add_argument("--split", choices=("train", "test"), default="test")
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.set_defaults(fn=_cmd_eval)

    p_probe = sub.add_parser("probe", help="run one probe against a snapshot")
    p_probe.add_argument("--snapshot", required=True)
    p_probe.add_argument("--config", required=True)
    p_probe.add_argument("--which", required=True, choices=PROBE_KINDS)
    p_probe.add_argument("--attack", default=None)
    p_probe.add_argument("--example", type=int, default=0)
    p_probe.add_argument("--out", default="probes")
    p_probe.add_argument("--seed", type=int, default=None)
    p_probe.set_defaults(fn=_cmd_probe)

    p_cs = sub.add_parser("cross-section", help="decision slice around one example")
    p_cs.add_argument("--snapshot", required=True)
    p_cs.add_argument("--config", required=True)
    p_cs.add_argument("--attack", default=None)
    p_cs.add_argument("--example", type=int, default=0)
    p_cs.add_argument("--out", default="probes")
    p_cs.add_argument("--seed", type=int, default=None)
    p_cs.set_defaults(fn=_cmd_cross_section)

    p_co = sub.add_parser("detect-co", help="scan an epochs.csv for collapses")
    p_co.add_argument("--csv", required=True)
    p_co.add_argument("--window", type=int, default=5)
    p_co.add_argument("--strong-drop", type=float, default=20.0)
    p_co.add_argument("--weak-rise", type=float, default=10.0)
    p_co.set_defaults(fn=_cmd_detect_co)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TrainingDivergedError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
