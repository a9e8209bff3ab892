"""Synthetic dataset generators, IDX image loading, and batch iteration.

Generated inputs live in the unit box [0, 1]^d so the same l-infinity
budgets apply to synthetic and pixel data alike.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .diffcore import as_tensor

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Base class for malformed IDX input."""


class IdxMagicError(IdxFormatError):
    """Header magic number does not identify an IDX image/label file."""


class IdxCountMismatchError(IdxFormatError):
    """Image file and label file advertise different example counts."""


class IdxTruncatedError(IdxFormatError):
    """Payload shorter than the header promises."""


@dataclass
class Dataset:
    """Flat inputs (N, d) with integer labels (N,)."""

    inputs: np.ndarray
    labels: np.ndarray
    name: str
    num_classes: int
    pixel_domain: bool = True
    source_indices: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.inputs = as_tensor(self.inputs)
        if self.inputs.ndim != 2:
            raise ValueError("inputs must have shape (N, d)")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.inputs.shape[0],):
            raise ValueError("labels must have shape (N,)")
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if len(self) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        if self.pixel_domain and len(self):
            if self.inputs.min() < 0.0 or self.inputs.max() > 1.0:
                raise ValueError("pixel-domain inputs must lie in [0, 1]")

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def __len__(self) -> int:
        return self.inputs.shape[0]


def gen_blobs(
    num_classes: int,
    dim: int,
    per_class: int,
    separation: float,
    noise_sigma: float,
    seed: int,
) -> Dataset:
    """Gaussian blobs on the diagonal of the unit box.

    Class k is centered at a constant vector whose coordinates all equal the
    k-th level; adjacent levels differ by ``separation`` in every coordinate.
    With ``noise_sigma`` 0 every example equals its class center exactly.
    """
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    if dim < 1 or per_class < 1:
        raise ValueError("dim and per_class must be positive")
    if separation <= 0 or noise_sigma < 0:
        raise ValueError("separation must be > 0 and noise_sigma >= 0")
    spread = (num_classes - 1) * separation
    if spread >= 1.0:
        raise ValueError("class centers do not fit inside the unit box")
    start = 0.5 - spread / 2.0
    rng = np.random.default_rng(seed)
    points, labels = [], []
    for k in range(num_classes):
        center = np.full((per_class, dim), start + k * separation)
        if noise_sigma:
            center += rng.normal(0.0, noise_sigma, size=(per_class, dim))
        points.append(center)
        labels.append(np.full(per_class, k, dtype=np.int64))
    inputs = np.clip(np.vstack(points), 0.0, 1.0)
    return Dataset(inputs, np.concatenate(labels), "blobs", num_classes)


def gen_rings(
    per_class: int,
    radii,
    noise_sigma: float,
    seed: int,
    dim: int = 2,
) -> Dataset:
    """Concentric noisy rings (spherical shells for dim > 2) around the box
    center; one ring per class, labeled by radius order."""
    radii = [float(r) for r in radii]
    if len(radii) < 2:
        raise ValueError("need at least 2 radii (one ring per class)")
    if any(r <= 0 for r in radii) or any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be positive and strictly increasing")
    if max(radii) >= 0.5:
        raise ValueError("rings must fit inside the unit box (radius < 0.5)")
    if per_class < 1 or noise_sigma < 0 or dim < 2:
        raise ValueError("per_class >= 1, noise_sigma >= 0, dim >= 2 required")
    rng = np.random.default_rng(seed)
    points, labels = [], []
    for k, r in enumerate(radii):
        if dim == 2:
            theta = rng.uniform(0.0, 2.0 * np.pi, size=per_class)
            dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        else:
            dirs = rng.normal(size=(per_class, dim))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        noise = rng.normal(0.0, noise_sigma, size=(per_class, dim)) if noise_sigma else 0.0
        points.append(0.5 + r * dirs + noise)
        labels.append(np.full(per_class, k, dtype=np.int64))
    inputs = np.clip(np.vstack(points), 0.0, 1.0)
    return Dataset(inputs, np.concatenate(labels), "rings", len(radii))


def load_idx(images_path, labels_path) -> Dataset:
    """Load big-endian IDX image/label files into a flat [0, 1] dataset.

    Raises:
        IdxMagicError: wrong magic number in either header.
        IdxCountMismatchError: image and label counts disagree.
        IdxTruncatedError: payload shorter than the header promises.
    """
    with open(images_path, "rb") as fh:
        img_blob = fh.read()
    with open(labels_path, "rb") as fh:
        lbl_blob = fh.read()
    if len(img_blob) < 16:
        raise IdxTruncatedError("image file shorter than its 16-byte header")
    magic, count, rows, cols = struct.unpack(">IIII", img_blob[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise IdxMagicError(f"bad image magic 0x{magic:08x}")
    if len(img_blob) - 16 != count * rows * cols:
        raise IdxTruncatedError(
            f"image payload has {len(img_blob) - 16} bytes, expected {count * rows * cols}"
        )
    if len(lbl_blob) < 8:
        raise IdxTruncatedError("label file shorter than its 8-byte header")
    lmagic, lcount = struct.unpack(">II", lbl_blob[:8])
    if lmagic != IDX_LABELS_MAGIC:
        raise IdxMagicError(f"bad label magic 0x{lmagic:08x}")
    if lcount != count:
        raise IdxCountMismatchError(f"{count} images vs {lcount} labels")
    if len(lbl_blob) - 8 != lcount:
        raise IdxTruncatedError(
            f"label payload has {len(lbl_blob) - 8} bytes, expected {lcount}"
        )
    pixels = np.frombuffer(img_blob, dtype=np.uint8, offset=16)
    inputs = pixels.astype(np.float64).reshape(count, rows * cols) / 255.0
    labels = np.frombuffer(lbl_blob, dtype=np.uint8, offset=8).astype(np.int64)
    num_classes = max(2, int(labels.max()) + 1) if count else 2
    return Dataset(inputs, labels, "idx", num_classes)


@dataclass(frozen=True)
class BatchPlan:
    """Epoch-indexed shuffling recipe: the permutation is a pure function
    of (shuffle_seed, epoch_index)."""

    batch_size: int
    shuffle_seed: int
    epoch_index: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.shuffle_seed < 0 or self.epoch_index < 0:
            raise ValueError("shuffle_seed and epoch_index must be non-negative")


def batches(dataset: Dataset, plan: BatchPlan):
    """Yield (inputs, labels) batches covering the dataset exactly once.

    The final batch may be short.  Identical plans yield identical batches.
    """
    rng = np.random.default_rng(
        np.random.SeedSequence([plan.shuffle_seed, plan.epoch_index])
    )
    perm = rng.permutation(len(dataset))
    for lo in range(0, len(dataset), plan.batch_size):
        idx = perm[lo : lo + plan.batch_size]
        yield dataset.inputs[idx], dataset.labels[idx]


def subsample(dataset: Dataset, size: int, seed: int) -> Dataset:
    """Fixed seeded subsample (without replacement, index-sorted).

    Returns the full dataset when ``size`` meets or exceeds its length; the
    chosen indices ride along in ``source_indices``.
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    if size >= len(dataset):
        idx = np.arange(len(dataset))
    else:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.permutation(len(dataset))[:size])
    return Dataset(
        dataset.inputs[idx].copy(),
        dataset.labels[idx].copy(),
        dataset.name,
        dataset.num_classes,
        dataset.pixel_domain,
        source_indices=idx,
    )
