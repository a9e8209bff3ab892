"""Classifier construction and snapshot serialization.

A classifier is a stack of affine layers with optional ReLU activations
over flat inputs.  Snapshots freeze the parameters of a classifier at a
training epoch into a compact binary container.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import diffcore
from .diffcore import as_tensor

ACTIVATIONS = ("relu", "none")

SNAPSHOT_MAGIC = b"COLB"
SNAPSHOT_VERSION = 1
_ACT_CODES = {"none": 0, "relu": 1}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}


class SnapshotFormatError(ValueError):
    """Raised when a snapshot file is malformed or unreadable."""


def _validate_specs(layer_specs) -> list[tuple[int, int, str]]:
    specs = [(int(i), int(o), str(a)) for i, o, a in layer_specs]
    if not specs:
        raise ValueError("at least one layer is required")
    for i, o, a in specs:
        if i < 1 or o < 1:
            raise ValueError(f"layer dims must be positive, got ({i}, {o})")
        if a not in ACTIVATIONS:
            raise ValueError(f"unknown activation {a!r}")
    for (_, out_prev, _), (in_next, _, _) in zip(specs, specs[1:]):
        if out_prev != in_next:
            raise ValueError(f"layer dims do not chain: {out_prev} -> {in_next}")
    if specs[-1][1] < 2:
        raise ValueError("final layer must emit at least 2 class logits")
    return specs


class Classifier:
    """Immutable-shape affine+ReLU stack; parameters are mutable arrays."""

    def __init__(self, layer_specs, weights, biases):
        self.layer_specs = _validate_specs(layer_specs)
        if len(weights) != len(self.layer_specs) or len(biases) != len(self.layer_specs):
            raise ValueError("one weight and bias tensor required per layer")
        self.weights = [
            as_tensor(w, shape=(o, i))
            for w, (i, o, _) in zip(weights, self.layer_specs)
        ]
        self.biases = [
            as_tensor(b, shape=(o,)) for b, (_, o, _) in zip(biases, self.layer_specs)
        ]

    @property
    def activations(self) -> list[str]:
        return [a for _, _, a in self.layer_specs]

    @property
    def input_dim(self) -> int:
        return self.layer_specs[0][0]

    @property
    def num_classes(self) -> int:
        return self.layer_specs[-1][1]

    def params(self) -> list[np.ndarray]:
        """Live parameter tensors in declaration order W0, b0, W1, b1, ..."""
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy_params(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params()]

    def set_params(self, params) -> None:
        own = self.params()
        if len(params) != len(own):
            raise ValueError(f"expected {len(own)} tensors, got {len(params)}")
        for dst, src in zip(own, params):
            dst[...] = as_tensor(src, shape=dst.shape)

    def num_params(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> "Classifier":
        return Classifier(
            self.layer_specs,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def predict(self, x) -> np.ndarray:
        """Argmax class labels for one example or a batch."""
        logits = diffcore.forward(self, x)
        return np.argmax(logits, axis=-1)


def build_mlp(layer_specs, seed: int) -> Classifier:
    """Fresh MLP with uniform(+-sqrt(1/fan_in)) weights and biases.

    Identical seeds give bit-identical parameters.
    """
    specs = _validate_specs(layer_specs)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out, _ in specs:
        lim = float(np.sqrt(1.0 / fan_in))
        weights.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-lim, lim, size=fan_out))
    return Classifier(specs, weights, biases)


def build_affine(w, b) -> Classifier:
    """Single affine layer classifier: logits = w @ x + b."""
    w = as_tensor(w)
    b = as_tensor(b)
    if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
        raise ValueError("need w of shape (C, d) and b of shape (C,)")
    return Classifier([(w.shape[1], w.shape[0], "none")], [w], [b])


@dataclass
class ModelSnapshot:
    """Parameters of a classifier frozen at one training epoch."""

    layer_specs: list[tuple[int, int, str]]
    params: list[np.ndarray] = field(repr=False)
    epoch: int
    tag: str

    @classmethod
    def from_classifier(cls, classifier: Classifier, epoch: int, tag: str) -> "ModelSnapshot":
        return cls(list(classifier.layer_specs), classifier.copy_params(), int(epoch), tag)

    def to_classifier(self) -> Classifier:
        weights = self.params[0::2]
        biases = self.params[1::2]
        return Classifier(self.layer_specs, weights, biases)


def save_snapshot(snapshot: ModelSnapshot, path) -> None:
    """Write a snapshot: magic, version, layer table, epoch, tag, then raw
    little-endian float64 parameter payloads in declaration order."""
    specs = _validate_specs(snapshot.layer_specs)
    tag_bytes = snapshot.tag.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<I", SNAPSHOT_VERSION))
        fh.write(struct.pack("<I", len(specs)))
        for fan_in, fan_out, act in specs:
            fh.write(struct.pack("<IIB", fan_in, fan_out, _ACT_CODES[act]))
        fh.write(struct.pack("<iI", snapshot.epoch, len(tag_bytes)))
        fh.write(tag_bytes)
        for p, shape in zip(snapshot.params, _param_shapes(specs)):
            arr = as_tensor(p, shape=shape)
            fh.write(arr.astype("<f8").tobytes())


def _param_shapes(specs):
    shapes = []
    for fan_in, fan_out, _ in specs:
        shapes.append((fan_out, fan_in))
        shapes.append((fan_out,))
    return shapes


def load_snapshot(path) -> ModelSnapshot:
    """Read a snapshot written by :func:`save_snapshot`.

    Raises:
        SnapshotFormatError: bad magic, unsupported version, or truncation.
    """
    with open(path, "rb") as fh:
        blob = fh.read()

    def take(n: int, what: str) -> bytes:
        nonlocal offset
        if offset + n > len(blob):
            raise SnapshotFormatError(f"truncated snapshot while reading {what}")
        piece = blob[offset : offset + n]
        offset += n
        return piece

    offset = 0
    if take(4, "magic") != SNAPSHOT_MAGIC:
        raise SnapshotFormatError("bad magic; not a snapshot file")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != SNAPSHOT_VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {version}")
    (n_layers,) = struct.unpack("<I", take(4, "layer count"))
    specs = []
    for _ in range(n_layers):
        fan_in, fan_out, code = struct.unpack("<IIB", take(9, "layer spec"))
        if code not in _ACT_NAMES:
            raise SnapshotFormatError(f"unknown activation code {code}")
        specs.append((fan_in, fan_out, _ACT_NAMES[code]))
    epoch, tag_len = struct.unpack("<iI", take(8, "epoch/tag header"))
    tag = take(tag_len, "tag").decode("utf-8")
    params = []
    for shape in _param_shapes(_validate_specs(specs)):
        count = int(np.prod(shape))
        raw = take(count * 8, "parameter payload")
        params.append(np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape))
    if offset != len(blob):
        raise SnapshotFormatError("trailing bytes after parameter payload")
    return ModelSnapshot(specs, params, epoch, tag)
