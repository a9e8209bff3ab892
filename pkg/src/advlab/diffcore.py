"""Dense tensors and reverse-mode differentiation for small classifiers.

Classifiers here are plain affine+ReLU stacks over flat inputs (any object
exposing ``weights``, ``biases``, ``activations``, ``input_dim`` and
``num_classes`` works; see :mod:`advlab.models`).  Every evaluation builds a
private computation graph, so classifiers can be shared read-only across
threads without locking.

Everything runs in double precision.  Gradients are exact reverse-mode
derivatives; ``finite_diff_check`` provides the central-difference
cross-check.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

# The package-wide value carrier: a dense float64 ndarray.
Tensor = np.ndarray


def as_tensor(values, shape=None) -> np.ndarray:
    """Convert to a float64 array, rejecting NaN/Inf entries.

    Args:
        values: array-like input.
        shape: optional shape the result must match.

    Raises:
        ValueError: on non-finite entries or a shape mismatch.
    """
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor values must be finite")
    if shape is not None and tuple(arr.shape) != tuple(shape):
        raise ValueError(f"expected shape {tuple(shape)}, got {arr.shape}")
    return arr


class OpKind(enum.Enum):
    LEAF = "leaf"
    AFFINE = "affine"
    RELU = "relu"
    ADD = "add"
    SCALE = "scale"
    SOFTMAX_XENT = "softmax_xent"


class Node:
    """One vertex of an acyclic evaluation graph.

    Carries the cached forward value and, after :func:`backward`, the
    gradient of the root with respect to this node's value.
    """

    __slots__ = ("op", "inputs", "value", "grad", "ctx")

    def __init__(self, op: OpKind, inputs: tuple, value: np.ndarray, ctx=None):
        self.op = op
        self.inputs = tuple(inputs)
        self.value = value
        self.grad = None
        self.ctx = ctx

    def __repr__(self):
        return f"Node({self.op.value}, shape={np.shape(self.value)})"


def leaf(values) -> Node:
    return Node(OpKind.LEAF, (), as_tensor(values))


def affine(x: Node, w: Node, b: Node) -> Node:
    """x @ w.T + b for x of shape (B, d_in), w (d_out, d_in), b (d_out,)."""
    return Node(OpKind.AFFINE, (x, w, b), x.value @ w.value.T + b.value)


def relu(x: Node) -> Node:
    """Elementwise max(x, 0); the subgradient used at exactly 0 is 0."""
    return Node(OpKind.RELU, (x,), np.maximum(x.value, 0.0))


def add(a: Node, b: Node) -> Node:
    if a.value.shape != b.value.shape:
        raise ValueError(f"add shape mismatch: {a.value.shape} vs {b.value.shape}")
    return Node(OpKind.ADD, (a, b), a.value + b.value)


def scale(a: Node, c: float) -> Node:
    return Node(OpKind.SCALE, (a,), float(c) * a.value, ctx=float(c))


def _check_labels(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim == 0:
        labels = labels.reshape(1)
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == labels.astype(np.int64)):
            raise ValueError("labels must be integers")
        labels = labels.astype(np.int64)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= num_classes:
        raise ValueError(f"labels must lie in [0, {num_classes})")
    return labels.astype(np.int64)


def softmax_cross_entropy(logits: Node, labels) -> Node:
    """Mean cross-entropy of softmax(logits) against integer labels.

    Fused and stabilized: the max logit is subtracted before
    exponentiation, so huge logit gaps stay finite.
    """
    z = logits.value
    if z.ndim != 2:
        raise ValueError("logits must have shape (batch, num_classes)")
    y = _check_labels(labels, z.shape[1])
    if y.shape[0] != z.shape[0]:
        raise ValueError("batch size mismatch between logits and labels")
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    sums = ez.sum(axis=1, keepdims=True)
    log_probs = (z - zmax) - np.log(sums)
    value = np.float64(-log_probs[np.arange(z.shape[0]), y].mean())
    probs = ez / sums
    return Node(OpKind.SOFTMAX_XENT, (logits,), value, ctx=(probs, y))


def topo_order(root: Node) -> list[Node]:
    """Inputs-before-outputs ordering of the graph reachable from root."""
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for child in node.inputs:
            stack.append((child, False))
    return order


def backward(root: Node, seed_grad=None, order: list[Node] | None = None) -> None:
    """Accumulate d(root)/d(node) into node.grad for the whole graph.

    Any grads from a previous pass over the same graph are cleared first,
    so the graph can be reused with different seed gradients.
    """
    if order is None:
        order = topo_order(root)
    for node in order:
        node.grad = None
    if seed_grad is None:
        seed_grad = np.ones_like(root.value)
    root.grad = np.asarray(seed_grad, dtype=np.float64)
    for node in reversed(order):
        g = node.grad
        if g is None:
            continue
        if node.op is OpKind.AFFINE:
            x, w, b = node.inputs
            _accumulate(x, g @ w.value)
            _accumulate(w, g.T @ x.value)
            _accumulate(b, g.sum(axis=0))
        elif node.op is OpKind.RELU:
            (x,) = node.inputs
            _accumulate(x, g * (x.value > 0.0))
        elif node.op is OpKind.ADD:
            a, b = node.inputs
            _accumulate(a, g)
            _accumulate(b, g)
        elif node.op is OpKind.SCALE:
            (a,) = node.inputs
            _accumulate(a, node.ctx * g)
        elif node.op is OpKind.SOFTMAX_XENT:
            (logits,) = node.inputs
            probs, y = node.ctx
            dz = probs.copy()
            dz[np.arange(dz.shape[0]), y] -= 1.0
            _accumulate(logits, g * dz / dz.shape[0])


def _accumulate(node: Node, g: np.ndarray) -> None:
    if node.grad is None:
        node.grad = g.copy()
    else:
        node.grad = node.grad + g


@dataclass
class GradientBundle:
    """Gradients of one loss evaluation: w.r.t. the input batch and each
    parameter tensor (in declaration order W0, b0, W1, b1, ...)."""

    input_grad: np.ndarray
    param_grads: list[np.ndarray]


def _as_batch(x) -> tuple[np.ndarray, bool]:
    arr = as_tensor(x)
    if arr.ndim == 1:
        return arr.reshape(1, -1), True
    if arr.ndim == 2:
        return arr, False
    raise ValueError(f"input must be 1-D or 2-D, got shape {arr.shape}")


def _check_input(classifier, x2: np.ndarray) -> None:
    if x2.shape[0] < 1:
        raise ValueError("batch must contain at least one example")
    if x2.shape[1] != classifier.input_dim:
        raise ValueError(
            f"input dim {x2.shape[1]} does not match classifier dim {classifier.input_dim}"
        )


def _build_graph(classifier, x2: np.ndarray):
    """Forward graph for a batch; returns (x leaf, param leaves, logits node)."""
    x_node = leaf(x2)
    param_nodes: list[Node] = []
    h = x_node
    for w, b, act in zip(classifier.weights, classifier.biases, classifier.activations):
        w_node, b_node = leaf(w), leaf(b)
        param_nodes.extend((w_node, b_node))
        h = affine(h, w_node, b_node)
        if act == "relu":
            h = relu(h)
    return x_node, param_nodes, h


def forward(classifier, x) -> np.ndarray:
    """Logits for a single example (d,) -> (C,) or a batch (B, d) -> (B, C)."""
    x2, squeeze = _as_batch(x)
    _check_input(classifier, x2)
    _, _, logits = _build_graph(classifier, x2)
    out = logits.value
    return out[0] if squeeze else out


def loss(logits, labels) -> float:
    """Mean softmax cross-entropy of raw logits against integer labels."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim == 1:
        z = z.reshape(1, -1)
    y = _check_labels(labels, z.shape[1])
    if y.shape[0] != z.shape[0]:
        raise ValueError("batch size mismatch between logits and labels")
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    return float(np.mean(lse - z[np.arange(z.shape[0]), y]))


def loss_and_grads(classifier, x, y) -> tuple[float, GradientBundle]:
    """One fused pass: mean loss plus exact gradients w.r.t. x and params."""
    x2, squeeze = _as_batch(x)
    _check_input(classifier, x2)
    x_node, param_nodes, logits = _build_graph(classifier, x2)
    root = softmax_cross_entropy(logits, y)
    backward(root)
    input_grad = x_node.grad
    if input_grad is None:
        input_grad = np.zeros_like(x2)
    if squeeze:
        input_grad = input_grad[0]
    param_grads = [
        p.grad if p.grad is not None else np.zeros_like(p.value) for p in param_nodes
    ]
    return float(root.value), GradientBundle(input_grad, param_grads)


def grad_input(classifier, x, y) -> np.ndarray:
    """Gradient of the mean loss w.r.t. the input; shape matches x."""
    return loss_and_grads(classifier, x, y)[1].input_grad


def grad_params(classifier, x, y) -> GradientBundle:
    """Gradients of the mean loss w.r.t. every parameter tensor."""
    return loss_and_grads(classifier, x, y)[1]


def logit_jacobian(classifier, x) -> tuple[np.ndarray, np.ndarray]:
    """Per-class input gradients for one example.

    Returns:
        (logits, jac): logits of shape (C,) and jac of shape (C, d) where
        jac[k] is the gradient of logit k w.r.t. x.
    """
    x2, squeeze = _as_batch(x)
    if not squeeze:
        raise ValueError("logit_jacobian expects a single example of shape (d,)")
    _check_input(classifier, x2)
    x_node, _, logits = _build_graph(classifier, x2)
    order = topo_order(logits)
    num_classes = logits.value.shape[1]
    jac = np.empty((num_classes, x2.shape[1]))
    for k in range(num_classes):
        seed = np.zeros_like(logits.value)
        seed[0, k] = 1.0
        backward(logits, seed_grad=seed, order=order)
        jac[k] = x_node.grad[0] if x_node.grad is not None else 0.0
    return logits.value[0].copy(), jac


def finite_diff_check(classifier, x, y, step: float = 1e-5) -> float:
    """Worst-case agreement between analytic and central-difference grads.

    Sweeps every input coordinate and every parameter coordinate, comparing
    the reverse-mode gradient a against the central difference c via the
    symmetric relative error |a - c| / (|a| + |c| + 1e-12).

    Returns:
        The maximum relative error over all coordinates.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x2, _ = _as_batch(x)
    _, bundle = loss_and_grads(classifier, x2, y)
    worst = 0.0

    def rel_err(a: float, c: float) -> float:
        return abs(a - c) / (abs(a) + abs(c) + 1e-12)

    xp = x2.copy()
    flat = xp.ravel()
    analytic = bundle.input_grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = loss(forward(classifier, xp), y)
        flat[i] = orig - step
        down = loss(forward(classifier, xp), y)
        flat[i] = orig
        worst = max(worst, rel_err(analytic[i], (up - down) / (2.0 * step)))

    clone = classifier.copy()
    for tensor, grads in zip(clone.params(), bundle.param_grads):
        tflat, gflat = tensor.ravel(), grads.ravel()
        for i in range(tflat.size):
            orig = tflat[i]
            tflat[i] = orig + step
            up = loss(forward(clone, x2), y)
            tflat[i] = orig - step
            down = loss(forward(clone, x2), y)
            tflat[i] = orig
            worst = max(worst, rel_err(gflat[i], (up - down) / (2.0 * step)))
    return worst
