"""Geometric and statistical probes around a training run.

Includes perturbation-diversity measures, input-gradient statistics,
boundary-distance aggregation, decision cross-sections, scaled-perturbation
accuracy curves, and a window detector for sudden robustness collapse.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from . import diffcore
from .attacks import (
    DeepFoolConfig,
    DegenerateLinearizationError,
    deepfool_l2,
    make_attack,
    scale_perturbation,
)
from .data import Dataset


def diversity(a, b) -> float:
    """1 - cosine similarity between two perturbations (0 means parallel).

    Raises:
        ValueError: either vector is all zeros (cosine undefined).
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("diversity is undefined for zero vectors")
    if np.array_equal(a, b):
        return 0.0  # identical deltas are exactly parallel; skip the rounding
    return float(1.0 - np.dot(a, b) / (na * nb))


def direction_cosines(delta, init_delta, grad_sign) -> tuple[float, float]:
    """Cosines of a final perturbation against its random start and against
    the signed-gradient direction."""
    def cos(u, v):
        u = np.asarray(u, dtype=np.float64).ravel()
        v = np.asarray(v, dtype=np.float64).ravel()
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu == 0.0 or nv == 0.0:
            raise ValueError("cosine is undefined for zero vectors")
        return float(np.dot(u, v) / (nu * nv))

    return cos(delta, init_delta), cos(delta, grad_sign)


def input_grad_l2(classifier, sample: Dataset) -> float:
    """Mean l2 norm of the per-example loss gradient w.r.t. the input."""
    n = len(sample)
    if n == 0:
        raise ValueError("sample must be non-empty")
    # grad of the mean loss; rows scale by 1/n, so undo it for per-example norms
    g = diffcore.grad_input(classifier, sample.inputs, sample.labels) * n
    return float(np.mean(np.linalg.norm(g, axis=1)))


def df2_stats(
    classifier, sample: Dataset, cfg: DeepFoolConfig = DeepFoolConfig()
) -> tuple[float, float, float]:
    """Aggregate iterative boundary searches over a sample.

    Returns:
        (mean iterations, mean pre-overshoot l2 norm, fooled fraction).
        Examples that hit the iteration cap count in the denominator with
        fooled = False; already-misclassified examples count as fooled at
        zero distance.  An example whose linearization degenerates (no
        boundary direction anywhere around it) counts as never fooled with
        the full iteration budget and zero norm.
    """
    if len(sample) == 0:
        raise ValueError("sample must be non-empty")
    iters, norms, fooled = [], [], []
    for xi, yi in zip(sample.inputs, sample.labels):
        try:
            res = deepfool_l2(classifier, xi, cfg, y=int(yi))
        except DegenerateLinearizationError:
            iters.append(cfg.max_iterations)
            norms.append(0.0)
            fooled.append(False)
            continue
        iters.append(res.iterations)
        norms.append(res.margin_l2)
        fooled.append(res.fooled)
    return float(np.mean(iters)), float(np.mean(norms)), float(np.mean(fooled))


@dataclass
class AccuracyCurve:
    """Accuracy as a fixed perturbation is scaled from 0 to 1."""

    fractions: list[float]
    accuracies: list[float]
    attack: str
    epoch_tag: str = ""


def scaled_accuracy_curve(
    classifier,
    sample: Dataset,
    attack_spec: str,
    fractions,
    seed: int = 0,
    epoch_tag: str = "",
) -> AccuracyCurve:
    """Build one perturbation per example, then sweep scaled copies of it.

    Fraction 0 reproduces standard accuracy bit-for-bit.  Fractions must
    lie in [0, 1]; they are evaluated in ascending order.
    """
    fractions = sorted(float(f) for f in fractions)
    if not fractions:
        raise ValueError("need at least one fraction")
    if fractions[0] < 0.0 or fractions[-1] > 1.0:
        raise ValueError("fractions must lie in [0, 1]")
    fn = make_attack(attack_spec)
    pert = fn(classifier, sample.inputs, sample.labels, seed)
    accs = []
    for f in fractions:
        x_scaled = sample.inputs + scale_perturbation(pert.delta, f)
        preds = classifier.predict(x_scaled)
        accs.append(float(np.mean(preds == sample.labels)))
    return AccuracyCurve(fractions, accs, pert.method, epoch_tag)


@dataclass
class CrossSectionGrid:
    """Predicted labels on a 2-D slice through input space.

    Coordinates are multiples of each axis vector's own length: the grid
    point (s, t) is anchor + s * axis1 + t * axis2.
    """

    anchor: np.ndarray
    axis1: np.ndarray
    axis2: np.ndarray
    s_values: np.ndarray
    t_values: np.ndarray
    labels: np.ndarray
    true_label: int | None = None


def cross_section(
    classifier,
    x,
    axis1,
    axis2,
    coord_range: tuple[float, float] = (-1.5, 1.5),
    resolution: int = 101,
    true_label: int | None = None,
) -> CrossSectionGrid:
    """Label the plane spanned by two perturbation vectors around an anchor.

    ``labels[i, j]`` is the prediction at x + s_values[i] * axis1 +
    t_values[j] * axis2.  With the default symmetric range and odd
    resolution the center cell is the clean prediction.
    """
    x = np.asarray(x, dtype=np.float64)
    axis1 = np.asarray(axis1, dtype=np.float64).reshape(x.shape)
    axis2 = np.asarray(axis2, dtype=np.float64).reshape(x.shape)
    if x.ndim != 1:
        raise ValueError("anchor must be a single example of shape (d,)")
    if np.linalg.norm(axis1) == 0.0 or np.linalg.norm(axis2) == 0.0:
        raise ValueError("axis vectors must be nonzero")
    lo, hi = float(coord_range[0]), float(coord_range[1])
    if not lo < hi:
        raise ValueError("coord_range must satisfy lo < hi")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    s_values = np.linspace(lo, hi, resolution)
    t_values = np.linspace(lo, hi, resolution)
    # one forward pass over the whole grid
    pts = (
        x[None, None, :]
        + s_values[:, None, None] * axis1[None, None, :]
        + t_values[None, :, None] * axis2[None, None, :]
    ).reshape(resolution * resolution, x.shape[0])
    preds = np.argmax(diffcore.forward(classifier, pts), axis=1)
    labels = preds.reshape(resolution, resolution)
    return CrossSectionGrid(
        x.copy(), axis1.copy(), axis2.copy(), s_values, t_values, labels, true_label
    )


def write_cross_section_csv(grid: CrossSectionGrid, path) -> None:
    """Rows of s,t,label covering the grid (s-major order)."""
    with open(path, "w", newline="") as fh:
        fh.write("s,t,label\n")
        for i, s in enumerate(grid.s_values):
            for j, t in enumerate(grid.t_values):
                fh.write(f"{s:.9g},{t:.9g},{int(grid.labels[i, j])}\n")


def write_cross_section_sidecar(grid: CrossSectionGrid, path, anchor_index=None) -> None:
    """JSON companion: anchor index, axis norms, true label, grid shape."""
    payload = {
        "anchor_index": anchor_index,
        "axis1_l2": float(np.linalg.norm(grid.axis1)),
        "axis2_l2": float(np.linalg.norm(grid.axis2)),
        "true_label": None if grid.true_label is None else int(grid.true_label),
        "resolution": int(grid.labels.shape[0]),
        "coord_range": [float(grid.s_values[0]), float(grid.s_values[-1])],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_accuracy_curve_csv(curve: AccuracyCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("fraction,accuracy\n")
        for f, a in zip(curve.fractions, curve.accuracies):
            fh.write(f"{f:.9g},{a:.9g}\n")


@dataclass
class CoEvent:
    """One detected robustness collapse.

    Accuracies are fractions matching the trace; the after values are taken
    ``window`` epochs past the onset (clamped to the trace end).
    """

    onset_epoch: int
    window: int
    strong_before: float
    strong_after: float
    weak_before: float
    weak_after: float


def _series(trace) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    records = trace.epochs
    epochs = np.array([r.epoch for r in records], dtype=np.int64)
    strong = np.array([r.strong_test_acc for r in records], dtype=np.float64)
    weak = np.array([r.weak_train_acc for r in records], dtype=np.float64)
    return epochs, strong, weak


def detect_co(
    trace,
    window: int = 5,
    strong_drop: float = 20.0,
    weak_rise: float = 10.0,
) -> list[CoEvent]:
    """Find sudden strong-accuracy collapses paired with weak-accuracy jumps.

    An epoch e is a candidate when, within (e, e + window], the
    strong-attack test accuracy falls at least ``strong_drop`` percentage
    points below strong[e] and the weak-attack train accuracy rises at
    least ``weak_rise`` points above weak[e].  Candidates with overlapping
    windows merge into one event whose onset is the earliest epoch where the
    single largest one-epoch fall inside a candidate window begins.  Events
    already emitted never change when later epochs are appended.

    Args:
        trace: object with ``epochs`` records carrying ``epoch``,
            ``strong_test_acc`` and ``weak_train_acc`` (e.g. MetricsTrace).
        window: look-ahead length in epochs.
        strong_drop: required fall, percentage points.
        weak_rise: required rise, percentage points.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if strong_drop <= 0 or weak_rise <= 0:
        raise ValueError("thresholds must be positive")
    epochs, strong, weak = _series(trace)
    n = len(epochs)
    if n < window + 1:
        raise ValueError(f"trace needs at least {window + 1} epochs, has {n}")
    strong_pts, weak_pts = strong * 100.0, weak * 100.0
    candidates = [
        e
        for e in range(n - window)
        if strong_pts[e] - strong_pts[e + 1 : e + window + 1].min() >= strong_drop
        and weak_pts[e + 1 : e + window + 1].max() - weak_pts[e] >= weak_rise
    ]
    events: list[CoEvent] = []
    group: list[int] = []
    for e in candidates + [None]:
        if e is not None and (not group or e <= group[-1] + window):
            group.append(e)
            continue
        if group:
            onsets = []
            for c in group:
                falls = strong_pts[c : c + window] - strong_pts[c + 1 : c + window + 1]
                onsets.append(c + int(np.argmax(falls)))
            onset = min(onsets)
            after = min(onset + window, n - 1)
            events.append(
                CoEvent(
                    onset_epoch=int(epochs[onset]),
                    window=window,
                    strong_before=float(strong[onset]),
                    strong_after=float(strong[after]),
                    weak_before=float(weak[onset]),
                    weak_after=float(weak[after]),
                )
            )
        group = [e] if e is not None else []
    return events
