"""Shared test fixtures and independent oracles.

The oracles here never call the package's gradient or forward code paths:
forward is a hand-rolled matmul loop, losses use a scalar log-sum-exp, and
gradients come from central differences.  Frozen expected values in the
tests were produced by these routines.
"""

from __future__ import annotations

import math

import numpy as np

from advlab.trainer import EpochRecord, MetricsTrace


def oracle_forward(weights, biases, activations, x):
    """Independent affine+ReLU forward pass (no package code)."""
    h = np.atleast_2d(np.asarray(x, dtype=np.float64))
    for w, b, act in zip(weights, biases, activations):
        h = h @ np.asarray(w).T + np.asarray(b)
        if act == "relu":
            h = np.where(h > 0.0, h, 0.0)
    return h


def oracle_loss(logits, labels):
    """Scalar log-sum-exp cross-entropy, one example at a time."""
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.atleast_1d(labels)
    total = 0.0
    for row, y in zip(z, labels):
        m = max(row)
        lse = m + math.log(sum(math.exp(v - m) for v in row))
        total += lse - row[int(y)]
    return total / len(labels)


def oracle_model_loss(classifier, x, y):
    return oracle_loss(
        oracle_forward(classifier.weights, classifier.biases, classifier.activations, x), y
    )


def central_diff_input_grad(classifier, x, y, step=1e-6):
    """Central-difference gradient of the mean loss w.r.t. the input."""
    x = np.asarray(x, dtype=np.float64).copy()
    grad = np.zeros_like(x)
    flat, gflat = x.ravel(), grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = oracle_model_loss(classifier, x, y)
        flat[i] = orig - step
        down = oracle_model_loss(classifier, x, y)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * step)
    return grad


def sym_rel_err(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / (np.abs(a) + np.abs(b) + 1e-12)))


def trace_from_series(strong, weak, std=None):
    """MetricsTrace with the given strong/weak accuracy series (fractions)."""
    trace = MetricsTrace()
    std = std if std is not None else [0.8] * len(strong)
    for e, (s, w, c) in enumerate(zip(strong, weak, std)):
        trace.append_epoch(
            EpochRecord(
                epoch=e, lr=0.1, std_acc=c, weak_train_acc=w, weak_test_acc=w,
                strong_test_acc=s, delta_l2_mean=0.1, input_grad_l2_mean=0.5,
                df2_iters_mean=2.0, df2_norm_mean=0.05, loss_gap=0.2,
            )
        )
    return trace


def fig1_trace():
    """Sudden collapse: strong 45% -> ~0% and weak 60% -> 95% across epochs
    13 -> 14, after a smooth warmup."""
    strong, weak, std = [], [], []
    for e in range(25):
        if e <= 13:
            strong.append(0.20 + (0.45 - 0.20) * e / 13.0)
            weak.append(0.35 + (0.60 - 0.35) * e / 13.0)
            std.append(0.50 + 0.30 * e / 13.0)
        elif e == 14:
            strong.append(0.02)
            weak.append(0.93)
            std.append(0.82)
        else:
            strong.append(0.0)
            weak.append(0.95)
            std.append(0.83)
    return trace_from_series(strong, weak, std)


def slow_trace():
    """Gradual collapse: strong accuracy declines over epochs ~36-65 with a
    logistic profile (no 2-epoch window ever moves 20 points)."""

    def sigmoid(z):
        return 1.0 / (1.0 + math.exp(-z))

    strong, weak = [], []
    for e in range(80):
        if e < 30:
            strong.append(0.05 + 0.40 * e / 30.0)
            weak.append(0.15 + 0.40 * e / 30.0)
        elif e < 36:
            strong.append(0.45)
            weak.append(0.55)
        else:
            strong.append(0.45 * sigmoid((50.0 - e) / 4.0))
            weak.append(0.55 + 0.40 * sigmoid((e - 50.0) / 4.0))
    return trace_from_series(strong, weak)


def monotone_trace(n=30):
    strong = [0.1 + 0.8 * e / (n - 1) for e in range(n)]
    weak = [0.2 + 0.7 * e / (n - 1) for e in range(n)]
    return trace_from_series(strong, weak)
