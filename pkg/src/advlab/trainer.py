"""Adversarial training loop, robust evaluation, and metrics persistence.

Training is fully deterministic given the config seed: batch order, attack
randomness, and every per-epoch evaluation derive their streams from it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields

import numpy as np

from . import diffcore, probes
from .attacks import AttackSpec, make_attack, parse_attack_spec
from .data import BatchPlan, Dataset, batches, subsample
from .models import Classifier, ModelSnapshot
from .seeds import derive_seed


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; message pinpoints the epoch and batch."""


@dataclass(frozen=True)
class TrainConfig:
    """Optimization schedule and attack selection for one training run.

    The learning rate starts at ``base_lr`` and is divided by
    ``lr_decay_factor`` at each epoch listed in ``lr_decay_epochs``.
    ``eval_attack_spec`` defaults to a 10-step single-restart projected
    attack at the training epsilon with step eps/4.
    """

    epochs: int
    batch_size: int = 32
    base_lr: float = 0.1
    lr_decay_epochs: tuple[int, ...] = ()
    lr_decay_factor: float = 10.0
    momentum: float = 0.9
    weight_decay: float = 5e-4
    attack_spec: str = "none"
    eval_attack_spec: str = ""
    seed: int = 0
    probe_sample_size: int = 512
    record_batches: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.base_lr <= 0 or self.lr_decay_factor <= 0:
            raise ValueError("base_lr and lr_decay_factor must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.probe_sample_size < 1:
            raise ValueError("probe_sample_size must be >= 1")
        parse_attack_spec(self.attack_spec)
        if self.eval_attack_spec:
            parse_attack_spec(self.eval_attack_spec)


def lr_at(config: TrainConfig, epoch: int) -> float:
    """Piecewise-constant learning rate in effect during ``epoch``."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    drops = sum(1 for e in config.lr_decay_epochs if epoch >= e)
    return config.base_lr / config.lr_decay_factor**drops


def resolve_eval_spec(config: TrainConfig) -> AttackSpec:
    """The per-epoch robustness attack: explicit spec, or a derived
    10-step projected attack at the training epsilon; plain standard
    accuracy when the training attack carries no epsilon."""
    if config.eval_attack_spec:
        return parse_attack_spec(config.eval_attack_spec)
    train_spec = parse_attack_spec(config.attack_spec)
    eps = train_spec.params.get("eps")
    if eps is None:
        return parse_attack_spec("standard")
    return AttackSpec(
        "pgd",
        {"eps": eps, "alpha": eps / 4.0, "steps": 10, "restarts": 1},
        f"pgd(eps={eps},alpha={eps / 4.0},steps=10,restarts=1)",
    )


EPOCH_CSV_HEADER = (
    "epoch,lr,std_acc,weak_train_acc,weak_test_acc,strong_test_acc,"
    "delta_l2_mean,input_grad_l2_mean,df2_iters_mean,df2_norm_mean,loss_gap"
)

BATCH_CSV_HEADER = (
    "epoch,batch,adv_loss,std_loss,delta_l2_mean,std_acc,weak_acc,strong_acc,"
    "input_grad_l2_mean,df2_iters_mean,df2_norm_mean"
)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    std_acc: float
    weak_train_acc: float
    weak_test_acc: float
    strong_test_acc: float
    delta_l2_mean: float
    input_grad_l2_mean: float
    df2_iters_mean: float
    df2_norm_mean: float
    loss_gap: float


@dataclass
class BatchRecord:
    epoch: int
    batch: int
    adv_loss: float
    std_loss: float
    delta_l2_mean: float
    std_acc: float
    weak_acc: float
    strong_acc: float
    input_grad_l2_mean: float
    df2_iters_mean: float
    df2_norm_mean: float


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.9g}"


class MetricsTrace:
    """Per-epoch (and optional per-batch) training measurements."""

    def __init__(self):
        self.epochs: list[EpochRecord] = []
        self.batches: list[BatchRecord] = []

    def append_epoch(self, record: EpochRecord) -> None:
        self.epochs.append(record)

    def append_batch(self, record: BatchRecord) -> None:
        self.batches.append(record)

    def write_csv(self, path) -> None:
        """Epoch rows, floats at 9 significant digits; byte-stable."""
        with open(path, "w", newline="") as fh:
            fh.write(EPOCH_CSV_HEADER + "\n")
            for rec in self.epochs:
                fh.write(",".join(_fmt(getattr(rec, f.name)) for f in fields(rec)) + "\n")

    def write_batches_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(BATCH_CSV_HEADER + "\n")
            for rec in self.batches:
                fh.write(",".join(_fmt(getattr(rec, f.name)) for f in fields(rec)) + "\n")

    @staticmethod
    def read_csv(path) -> "MetricsTrace":
        trace = MetricsTrace()
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            expected = EPOCH_CSV_HEADER.split(",")
            if reader.fieldnames != expected:
                raise ValueError(f"unexpected epoch CSV header in {path}")
            for row in reader:
                trace.append_epoch(
                    EpochRecord(
                        epoch=int(row["epoch"]),
                        **{k: float(row[k]) for k in expected[1:]},
                    )
                )
        return trace


def evaluate(classifier: Classifier, dataset: Dataset, attack_spec, seed: int = 0) -> float:
    """Accuracy under an attack spec ("standard"/"none" for clean accuracy).

    For multi-restart attacks an example only counts as robust if every
    restart leaves the prediction correct.
    """
    if isinstance(attack_spec, str):
        attack_spec = parse_attack_spec(attack_spec)
    x, y = dataset.inputs, dataset.labels
    if attack_spec.is_none:
        return float(np.mean(classifier.predict(x) == y))
    restarts = attack_spec.params.get("restarts", 10) if attack_spec.name == "pgd" else 1
    if attack_spec.name == "pgd" and restarts > 1:
        single = AttackSpec(
            "pgd", {**attack_spec.params, "restarts": 1}, attack_spec.raw
        )
        fn = make_attack(single)
        correct = np.ones(len(dataset), dtype=bool)
        for r in range(restarts):
            pert = fn(classifier, x, y, derive_seed(seed, r))
            preds = classifier.predict(x + pert.delta)
            correct &= preds == y
        return float(np.mean(correct))
    fn = make_attack(attack_spec)
    pert = fn(classifier, x, y, seed)
    return float(np.mean(classifier.predict(x + pert.delta) == y))


def _probe_metrics(classifier: Classifier, sample: Dataset) -> tuple[float, float, float]:
    grad_mean = probes.input_grad_l2(classifier, sample)
    iters_mean, norm_mean, _ = probes.df2_stats(classifier, sample)
    return grad_mean, iters_mean, norm_mean


def train(
    config: TrainConfig,
    classifier: Classifier,
    train_ds: Dataset,
    test_ds: Dataset,
    on_epoch=None,
) -> tuple[Classifier, MetricsTrace, ModelSnapshot]:
    """Momentum-SGD adversarial training with per-epoch measurements.

    Updates ``classifier`` in place.  The best snapshot is the earliest
    epoch maximizing test accuracy under the evaluation attack.
    ``on_epoch(classifier, epoch)``, if given, runs after each epoch's
    bookkeeping (for probe schedules).

    Raises:
        TrainingDivergedError: the training loss became non-finite.
    """
    attack = make_attack(config.attack_spec)
    eval_spec = resolve_eval_spec(config)
    params = classifier.params()
    velocity = [np.zeros_like(p) for p in params]
    trace = MetricsTrace()
    probe_ds = subsample(test_ds, config.probe_sample_size, derive_seed(config.seed, 7001))
    best_acc = -1.0
    best_snap = None
    for epoch in range(config.epochs):
        lr = lr_at(config, epoch)
        adv_losses, clean_losses, delta_norms = [], [], []
        plan = BatchPlan(config.batch_size, config.seed, epoch)
        for b, (xb, yb) in enumerate(batches(train_ds, plan)):
            pert = attack(classifier, xb, yb, derive_seed(config.seed, epoch, b))
            adv_loss, bundle = diffcore.loss_and_grads(classifier, xb + pert.delta, yb)
            if not np.isfinite(adv_loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} batch {b}"
                )
            clean_loss = diffcore.loss(diffcore.forward(classifier, xb), yb)
            for p, v, g in zip(params, velocity, bundle.param_grads):
                v *= config.momentum
                v += g + config.weight_decay * p
                p -= lr * v
            adv_losses.append(adv_loss)
            clean_losses.append(clean_loss)
            delta_norms.append(float(np.mean(np.atleast_1d(pert.l2))))
            if config.record_batches:
                grad_mean, df2_iters, df2_norm = _probe_metrics(classifier, probe_ds)
                trace.append_batch(
                    BatchRecord(
                        epoch=epoch,
                        batch=b,
                        adv_loss=adv_loss,
                        std_loss=clean_loss,
                        delta_l2_mean=delta_norms[-1],
                        std_acc=evaluate(classifier, probe_ds, "standard"),
                        weak_acc=evaluate(
                            classifier, probe_ds, config.attack_spec,
                            seed=derive_seed(config.seed, epoch, b, 5001),
                        ),
                        strong_acc=evaluate(
                            classifier, probe_ds, eval_spec,
                            seed=derive_seed(config.seed, epoch, b, 5002),
                        ),
                        input_grad_l2_mean=grad_mean,
                        df2_iters_mean=df2_iters,
                        df2_norm_mean=df2_norm,
                    )
                )
        std_acc = evaluate(classifier, test_ds, "standard")
        weak_train = evaluate(
            classifier, train_ds, config.attack_spec, seed=derive_seed(config.seed, epoch, 9001)
        )
        weak_test = evaluate(
            classifier, test_ds, config.attack_spec, seed=derive_seed(config.seed, epoch, 9002)
        )
        strong_test = evaluate(
            classifier, test_ds, eval_spec, seed=derive_seed(config.seed, epoch, 9003)
        )
        grad_mean, df2_iters, df2_norm = _probe_metrics(classifier, probe_ds)
        trace.append_epoch(
            EpochRecord(
                epoch=epoch,
                lr=lr,
                std_acc=std_acc,
                weak_train_acc=weak_train,
                weak_test_acc=weak_test,
                strong_test_acc=strong_test,
                delta_l2_mean=float(np.mean(delta_norms)),
                input_grad_l2_mean=grad_mean,
                df2_iters_mean=df2_iters,
                df2_norm_mean=df2_norm,
                loss_gap=float(np.mean(adv_losses) - np.mean(clean_losses)),
            )
        )
        if strong_test > best_acc:
            best_acc = strong_test
            best_snap = ModelSnapshot.from_classifier(
                classifier, epoch, f"best-by-test-{eval_spec.name}"
            )
        if on_epoch is not None:
            on_epoch(classifier, epoch)
    return classifier, trace, best_snap
