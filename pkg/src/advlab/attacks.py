"""Perturbation constructors for l-infinity threat models.

Every attack is a pure function of (classifier, input, label, threat model,
seed): randomized constructors create a private generator per call, so
repeated invocations with the same seed are bit-identical and concurrent
invocations with distinct seeds never share state.

One-step constructors (fgsm and its randomized variants) work on a single
example (d,) or a batch (B, d).  The boundary-seeking constructors
(deepfool_*) and min_scale operate on one example at a time; ``make_attack``
wraps them with a per-example loop for batched use.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import diffcore
from .seeds import derive_seed


class DegenerateLinearizationError(ValueError):
    """All class-gradient differences vanished; no boundary direction exists."""


@dataclass(frozen=True)
class ThreatModel:
    """l-infinity budget and step configuration shared by the attacks.

    ``alpha`` of None means the canonical full step alpha = epsilon.
    ``project`` toggles the final clip back into the epsilon ball for the
    attacks that define one.  ``pixel_clamp`` additionally keeps x + delta
    inside [0, 1]^d (off by default).
    """

    epsilon: float
    alpha: float | None = None
    project: bool = True
    pixel_clamp: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.alpha is not None and self.alpha < 0:
            raise ValueError("alpha must be non-negative")

    @property
    def step(self) -> float:
        return self.epsilon if self.alpha is None else self.alpha


@dataclass
class Perturbation:
    """A constructed perturbation plus its provenance and cached norms.

    ``l2`` is per-example for batched deltas; ``linf`` is the global max
    absolute coordinate.
    """

    delta: np.ndarray
    method: str
    seed: int | None = None
    iterations_used: int = 1
    l2: np.ndarray | float = field(init=False)
    linf: float = field(init=False)

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=np.float64)
        self.l2 = _l2_norm(self.delta)
        self.linf = float(np.max(np.abs(self.delta))) if self.delta.size else 0.0

    def validate_norms(self, rtol: float = 1e-9) -> None:
        """Re-derive the cached norms from delta and compare."""
        l2 = _l2_norm(self.delta)
        linf = float(np.max(np.abs(self.delta))) if self.delta.size else 0.0
        if not np.allclose(self.l2, l2, rtol=rtol, atol=0.0):
            raise ValueError("cached l2 norm does not match delta")
        if not np.isclose(self.linf, linf, rtol=rtol, atol=0.0):
            raise ValueError("cached linf norm does not match delta")


def _l2_norm(delta: np.ndarray):
    if delta.ndim <= 1:
        return float(np.linalg.norm(delta))
    return np.linalg.norm(delta, axis=1)


def project_linf(delta: np.ndarray, epsilon: float) -> np.ndarray:
    """Coordinatewise projection onto the l-infinity ball of given radius."""
    if not epsilon >= 0:
        raise ValueError("epsilon must be non-negative")
    return np.clip(delta, -epsilon, epsilon)


def _pixel_clamp(delta: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.clip(delta, -x, 1.0 - x)


def _finish(delta: np.ndarray, x: np.ndarray, tm: ThreatModel, projected: bool) -> np.ndarray:
    if projected:
        delta = project_linf(delta, tm.epsilon)
    if tm.pixel_clamp:
        delta = _pixel_clamp(delta, x)
    return delta


def _uniform_init(rng: np.random.Generator, shape, epsilon: float) -> np.ndarray:
    return rng.uniform(-epsilon, epsilon, size=shape)


def _corner_init(rng: np.random.Generator, shape, magnitude: float) -> np.ndarray:
    return (rng.integers(0, 2, size=shape) * 2 - 1) * magnitude


def fgsm(classifier, x, y, tm: ThreatModel) -> Perturbation:
    """Single signed-gradient step from the clean input: alpha * sign(grad).

    Deterministic; never projected (|delta| <= alpha coordinatewise already).
    """
    x = np.asarray(x, dtype=np.float64)
    grad = diffcore.grad_input(classifier, x, y)
    delta = tm.step * np.sign(grad)
    if tm.pixel_clamp:
        delta = _pixel_clamp(delta, x)
    return Perturbation(delta, "fgsm", seed=None, iterations_used=1)


def rs_fgsm(classifier, x, y, tm: ThreatModel, seed: int) -> Perturbation:
    """Signed-gradient step from a uniform random start inside the ball.

    With ``tm.project`` the result is clipped back to the epsilon ball;
    without it coordinates can reach epsilon + alpha.
    """
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    d0 = _uniform_init(rng, x.shape, tm.epsilon)
    grad = diffcore.grad_input(classifier, x + d0, y)
    delta = d0 + tm.step * np.sign(grad)
    return Perturbation(_finish(delta, x, tm, tm.project), "rs_fgsm", seed=seed)


def r_plus_fgsm(classifier, x, y, tm: ThreatModel, seed: int) -> Perturbation:
    """Half-magnitude corner start (+-eps/2 per coordinate) plus an eps/2
    signed step, projected; nonzero-gradient coordinates end in {-eps, 0, eps}."""
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    half = tm.epsilon / 2.0
    d0 = _corner_init(rng, x.shape, half)
    grad = diffcore.grad_input(classifier, x + d0, y)
    delta = d0 + half * np.sign(grad)
    return Perturbation(_finish(delta, x, tm, tm.project), "r_plus_fgsm", seed=seed)


def boundary_rs_fgsm(classifier, x, y, tm: ThreatModel, seed: int) -> Perturbation:
    """Signed-gradient step from a random corner of the ball (+-eps each
    coordinate), then projection; initialization carries no interior mass."""
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    d0 = _corner_init(rng, x.shape, tm.epsilon)
    grad = diffcore.grad_input(classifier, x + d0, y)
    delta = d0 + tm.step * np.sign(grad)
    return Perturbation(_finish(delta, x, tm, tm.project), "boundary_rs_fgsm", seed=seed)


def magnified_rs_fgsm(classifier, x, y, tm: ThreatModel, seed: int) -> Perturbation:
    """Random-start step rescaled per example to the l2 length a full-step
    sign attack would have had; deliberately not re-projected.

    Raises:
        ValueError: if any random-start perturbation has zero l2 norm.
    """
    x = np.asarray(x, dtype=np.float64)
    grad = diffcore.grad_input(classifier, x, y)
    d_full = tm.epsilon * np.sign(grad)
    base = rs_fgsm(classifier, x, y, tm, seed)
    rs_norm = np.atleast_1d(np.asarray(base.l2, dtype=np.float64))
    if np.any(rs_norm == 0.0):
        raise ValueError("random-start perturbation has zero norm; cannot magnify")
    full_norm = np.atleast_1d(_l2_norm(d_full))
    ratio = full_norm / rs_norm
    if base.delta.ndim == 2:
        delta = ratio[:, None] * base.delta
    else:
        delta = float(ratio[0]) * base.delta
    return Perturbation(delta, "magnified_rs_fgsm", seed=seed)


def diff_rs_fgsm(
    classifier,
    x,
    y,
    tm: ThreatModel,
    t: float,
    seed: int,
    force_equal_draws: bool = False,
) -> Perturbation:
    """Random start with the gradient probed at an interpolated second draw.

    Draws d1, d2 uniformly in the ball, evaluates the gradient at
    x + (1 - t) d1 + t d2, and steps from d1.  At t = 0 this is bit-identical
    to rs_fgsm under the same seed.  ``force_equal_draws`` is a test hook
    that copies d1 into d2.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    d1 = _uniform_init(rng, x.shape, tm.epsilon)
    d2 = d1.copy() if force_equal_draws else _uniform_init(rng, x.shape, tm.epsilon)
    d_mix = (1.0 - t) * d1 + t * d2
    grad = diffcore.grad_input(classifier, x + d_mix, y)
    delta = d1 + tm.step * np.sign(grad)
    return Perturbation(_finish(delta, x, tm, tm.project), "diff_rs_fgsm", seed=seed)


def _per_example_loss(logits: np.ndarray, y) -> np.ndarray:
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    return lse - z[np.arange(z.shape[0]), y]


def _pgd_one_restart(classifier, x, y, tm: ThreatModel, steps: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    delta = _uniform_init(rng, x.shape, tm.epsilon)
    if tm.pixel_clamp:
        delta = _pixel_clamp(delta, x)
    for _ in range(steps):
        grad = diffcore.grad_input(classifier, x + delta, y)
        delta = project_linf(delta + tm.step * np.sign(grad), tm.epsilon)
        if tm.pixel_clamp:
            delta = _pixel_clamp(delta, x)
    return delta


def pgd(
    classifier,
    x,
    y,
    tm: ThreatModel,
    steps: int,
    restarts: int,
    seed: int,
) -> Perturbation:
    """Projected gradient descent with random restarts.

    Each restart starts uniformly inside the ball and takes ``steps``
    projected sign steps; per example, the restart with the maximal final
    loss wins.  Restart r draws its start from the stream derived from
    (seed, r), so a multi-restart run can be reproduced restart by restart.
    ``steps`` of 0 returns the random initialization itself.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 2
    best_delta = None
    best_loss = None
    for r in range(restarts):
        delta = _pgd_one_restart(classifier, x, y, tm, steps, derive_seed(seed, r))
        losses = _per_example_loss(diffcore.forward(classifier, x + delta), y)
        if best_delta is None:
            best_delta, best_loss = delta, losses
        elif batched:
            better = losses > best_loss
            best_delta = np.where(better[:, None], delta, best_delta)
            best_loss = np.maximum(losses, best_loss)
        elif losses[0] > best_loss[0]:
            best_delta, best_loss = delta, losses
    return Perturbation(best_delta, "pgd", seed=seed, iterations_used=steps)


@dataclass(frozen=True)
class DeepFoolConfig:
    """Knobs for the boundary-seeking constructors.

    ``overshoot`` is applied once to the accumulated perturbation (and to
    the flip test), never to intermediate steps.
    """

    overshoot: float = 0.02
    max_iterations: int = 50
    norm_mode: str = "l2"

    def __post_init__(self):
        if self.overshoot < 0:
            raise ValueError("overshoot must be >= 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.norm_mode not in ("l2", "linf"):
            raise ValueError("norm_mode must be 'l2' or 'linf'")


@dataclass
class DeepFoolResult:
    """Outcome of an iterative boundary search.

    ``margin_l2`` is the l2 length of the accumulated perturbation before
    the overshoot factor, i.e. the boundary-distance estimate.
    """

    perturbation: Perturbation
    iterations: int
    fooled: bool
    margin_l2: float


def _require_single(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("this constructor works on a single example of shape (d,)")
    return x


def deepfool_l2(classifier, x, cfg: DeepFoolConfig = DeepFoolConfig(), y=None) -> DeepFoolResult:
    """Iterative minimal-l2 boundary search against the predicted class.

    Repeatedly linearizes the classifier, steps to the nearest linearized
    class boundary, and stops once the (overshot) point changes the
    prediction or the iteration cap is reached.  When ``y`` is given and x
    is already misclassified, returns a zero perturbation with 0 iterations.

    Raises:
        DegenerateLinearizationError: every class-gradient difference is 0.
    """
    if cfg.norm_mode != "l2":
        raise ValueError("deepfool_l2 requires norm_mode 'l2'")
    x = _require_single(x)
    logits = diffcore.forward(classifier, x)
    pred = int(np.argmax(logits))
    if y is not None and pred != int(y):
        zero = Perturbation(np.zeros_like(x), "df_l2", seed=None, iterations_used=0)
        return DeepFoolResult(zero, 0, True, 0.0)
    r_total = np.zeros_like(x)
    fooled = False
    iterations = 0
    grow = 1.0 + cfg.overshoot
    for _ in range(cfg.max_iterations):
        cur_logits, jac = diffcore.logit_jacobian(classifier, x + r_total)
        if int(np.argmax(cur_logits)) != pred:
            fooled = True
            break
        gaps = cur_logits - cur_logits[pred]
        w = jac - jac[pred]
        w_norms = np.linalg.norm(w, axis=1)
        candidates = [k for k in range(len(cur_logits)) if k != pred and w_norms[k] > 0.0]
        if not candidates:
            raise DegenerateLinearizationError(
                "all class-gradient differences vanish; no boundary direction"
            )
        dists = np.array([abs(gaps[k]) / w_norms[k] for k in candidates])
        k_star = candidates[int(np.argmin(dists))]
        step = (abs(gaps[k_star]) / w_norms[k_star] ** 2) * w[k_star]
        r_total = r_total + step
        iterations += 1
        if int(np.argmax(diffcore.forward(classifier, x + grow * r_total))) != pred:
            fooled = True
            break
    delta = grow * r_total
    pert = Perturbation(delta, "df_l2", seed=None, iterations_used=iterations)
    return DeepFoolResult(pert, iterations, fooled, float(np.linalg.norm(r_total)))


def deepfool_linf_1(classifier, x, cfg: DeepFoolConfig, y=None) -> Perturbation:
    """One linearization step to the nearest l-infinity class boundary.

    Uses the dual rule: r = (|gap| / ||w||_1) * sign(w) for the class
    minimizing |gap| / ||w||_1, scaled by (1 + overshoot).  The result is
    never projected onto an epsilon ball; its length adapts to the margin.
    With ``y`` given and x already misclassified, returns zero with 0
    iterations.
    """
    if cfg.norm_mode != "linf":
        raise ValueError("deepfool_linf_1 requires norm_mode 'linf'")
    x = _require_single(x)
    logits, jac = diffcore.logit_jacobian(classifier, x)
    pred = int(np.argmax(logits))
    if y is not None and pred != int(y):
        return Perturbation(np.zeros_like(x), "df_linf_1", seed=None, iterations_used=0)
    gaps = logits - logits[pred]
    w = jac - jac[pred]
    w_norms = np.abs(w).sum(axis=1)
    candidates = [k for k in range(len(logits)) if k != pred and w_norms[k] > 0.0]
    if not candidates:
        raise DegenerateLinearizationError(
            "all class-gradient differences vanish; no boundary direction"
        )
    ratios = np.array([abs(gaps[k]) / w_norms[k] for k in candidates])
    k_star = candidates[int(np.argmin(ratios))]
    r = (abs(gaps[k_star]) / w_norms[k_star]) * np.sign(w[k_star])
    delta = (1.0 + cfg.overshoot) * r
    return Perturbation(delta, "df_linf_1", seed=None, iterations_used=1)


def rs_deepfool_linf_1(
    classifier,
    x,
    tm: ThreatModel,
    cfg: DeepFoolConfig,
    seed: int,
    y=None,
    init_delta=None,
) -> Perturbation:
    """Uniform random start followed by one l-infinity boundary step, then
    projection back into the epsilon ball (per ``tm.project``).

    ``init_delta`` overrides the random draw (test hook); with it at zero
    and projection disabled this reduces to :func:`deepfool_linf_1`.
    """
    x = _require_single(x)
    if init_delta is None:
        rng = np.random.default_rng(seed)
        d0 = _uniform_init(rng, x.shape, tm.epsilon)
    else:
        d0 = np.asarray(init_delta, dtype=np.float64).reshape(x.shape)
    inner = deepfool_linf_1(classifier, x + d0, cfg, y=y)
    delta = d0 + inner.delta
    return Perturbation(
        _finish(delta, x, tm, tm.project),
        "rs_df_linf_1",
        seed=seed,
        iterations_used=1,
    )


@dataclass
class ScaleResult:
    """Smallest tested scale of a fixed direction that flips the label."""

    k_star: float | None
    fooled: bool


def min_scale(classifier, x, y, delta, grid_points: int = 101) -> ScaleResult:
    """Scan k in [0, 1] on an even grid for the smallest k with
    prediction(x + k * delta) != y; k = 0 tests the clean input."""
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    x = _require_single(x)
    delta = np.asarray(delta, dtype=np.float64).reshape(x.shape)
    ks = np.linspace(0.0, 1.0, grid_points)
    points = x[None, :] + ks[:, None] * delta[None, :]
    preds = np.argmax(diffcore.forward(classifier, points), axis=1)
    hits = np.nonzero(preds != int(y))[0]
    if hits.size == 0:
        return ScaleResult(None, False)
    return ScaleResult(float(ks[hits[0]]), True)


def scale_perturbation(delta, fraction: float) -> np.ndarray:
    """Elementwise rescaling of a perturbation; fraction must be >= 0."""
    if fraction < 0:
        raise ValueError("fraction must be >= 0")
    return float(fraction) * np.asarray(delta, dtype=np.float64)


# ---------------------------------------------------------------------------
# Attack-spec strings: "name" or "name(key=value,...)"
# ---------------------------------------------------------------------------

ATTACK_NAMES = (
    "none",
    "standard",
    "fgsm",
    "rs_fgsm",
    "r_plus_fgsm",
    "boundary_rs_fgsm",
    "magnified_rs_fgsm",
    "diff_rs_fgsm",
    "pgd",
    "df_linf_1",
    "rs_df_linf_1",
)

_FLOAT_KEYS = ("eps", "alpha", "eta", "t")
_INT_KEYS = ("steps", "restarts")
_BOOL_KEYS = ("project", "clamp")

_ALLOWED_KEYS = {
    "none": (),
    "standard": (),
    "fgsm": ("eps", "alpha", "clamp"),
    "rs_fgsm": ("eps", "alpha", "project", "clamp"),
    "r_plus_fgsm": ("eps", "project", "clamp"),
    "boundary_rs_fgsm": ("eps", "alpha", "project", "clamp"),
    "magnified_rs_fgsm": ("eps", "alpha"),
    "diff_rs_fgsm": ("eps", "alpha", "t", "project", "clamp"),
    "pgd": ("eps", "alpha", "steps", "restarts", "clamp"),
    "df_linf_1": ("eta",),
    "rs_df_linf_1": ("eps", "eta", "project", "clamp"),
}

_SPEC_RE = re.compile(r"^\s*([a-z0-9_]+)\s*(?:\(\s*(.*?)\s*\))?\s*$")


def parse_fraction(text: str) -> float:
    """Parse a numeric literal, keeping rationals like 8/255 exact until
    the final conversion to float."""
    try:
        return float(Fraction(str(text).strip()))
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"cannot parse number {text!r}") from exc


@dataclass(frozen=True)
class AttackSpec:
    """Parsed attack-spec string: canonical name plus typed parameters."""

    name: str
    params: dict
    raw: str

    @property
    def is_none(self) -> bool:
        return self.name in ("none", "standard")


def parse_attack_spec(text: str) -> AttackSpec:
    """Parse "name(key=value,...)" into an :class:`AttackSpec`.

    Numeric values accept exact rational strings ("8/255").  Booleans
    accept true/false/1/0.  Unknown names or keys are rejected.
    """
    m = _SPEC_RE.match(text)
    if not m:
        raise ValueError(f"malformed attack spec {text!r}")
    name, body = m.group(1), m.group(2)
    if name not in ATTACK_NAMES:
        raise ValueError(f"unknown attack {name!r}")
    params: dict = {}
    if body:
        for item in body.split(","):
            if "=" not in item:
                raise ValueError(f"malformed parameter {item!r} in {text!r}")
            key, value = (part.strip() for part in item.split("=", 1))
            if key not in _ALLOWED_KEYS[name]:
                raise ValueError(f"attack {name!r} does not accept parameter {key!r}")
            if key in _FLOAT_KEYS:
                params[key] = parse_fraction(value)
            elif key in _INT_KEYS:
                params[key] = int(value)
            elif key in _BOOL_KEYS:
                low = value.lower()
                if low not in ("true", "false", "1", "0"):
                    raise ValueError(f"cannot parse boolean {value!r}")
                params[key] = low in ("true", "1")
    return AttackSpec(name, params, text.strip())


def _tm_from(spec: AttackSpec) -> ThreatModel:
    if "eps" not in spec.params:
        raise ValueError(f"attack {spec.name!r} requires eps")
    return ThreatModel(
        epsilon=spec.params["eps"],
        alpha=spec.params.get("alpha"),
        project=spec.params.get("project", True),
        pixel_clamp=spec.params.get("clamp", False),
    )


def make_attack(spec):
    """Build a batched attack callable (classifier, x, y, seed) -> Perturbation
    from a spec string or parsed :class:`AttackSpec`."""
    if isinstance(spec, str):
        spec = parse_attack_spec(spec)
    name, params = spec.name, spec.params

    if spec.is_none:
        def run_none(classifier, x, y, seed):
            return Perturbation(
                np.zeros_like(np.asarray(x, dtype=np.float64)),
                "none",
                seed=None,
                iterations_used=0,
            )
        return run_none

    if name in ("fgsm", "rs_fgsm", "r_plus_fgsm", "boundary_rs_fgsm",
                "magnified_rs_fgsm", "diff_rs_fgsm", "pgd"):
        tm = _tm_from(spec)
        if name == "fgsm":
            return lambda classifier, x, y, seed: fgsm(classifier, x, y, tm)
        if name == "rs_fgsm":
            return lambda classifier, x, y, seed: rs_fgsm(classifier, x, y, tm, seed)
        if name == "r_plus_fgsm":
            return lambda classifier, x, y, seed: r_plus_fgsm(classifier, x, y, tm, seed)
        if name == "boundary_rs_fgsm":
            return lambda classifier, x, y, seed: boundary_rs_fgsm(classifier, x, y, tm, seed)
        if name == "magnified_rs_fgsm":
            return lambda classifier, x, y, seed: magnified_rs_fgsm(classifier, x, y, tm, seed)
        if name == "diff_rs_fgsm":
            t = params.get("t", 0.0)
            return lambda classifier, x, y, seed: diff_rs_fgsm(classifier, x, y, tm, t, seed)
        steps = params.get("steps", 50)
        restarts = params.get("restarts", 10)
        if "alpha" not in params:
            tm = ThreatModel(tm.epsilon, tm.epsilon / 4.0, tm.project, tm.pixel_clamp)
        return lambda classifier, x, y, seed: pgd(classifier, x, y, tm, steps, restarts, seed)

    cfg = DeepFoolConfig(overshoot=params.get("eta", 0.02), norm_mode="linf")
    if name == "df_linf_1":
        def run_df(classifier, x, y, seed):
            return _map_examples(
                lambda xi, yi, si: deepfool_linf_1(classifier, xi, cfg, y=yi),
                x, y, seed, "df_linf_1",
            )
        return run_df

    tm = _tm_from(spec)

    def run_rs_df(classifier, x, y, seed):
        return _map_examples(
            lambda xi, yi, si: rs_deepfool_linf_1(classifier, xi, tm, cfg, si, y=yi),
            x, y, seed, "rs_df_linf_1",
        )
    return run_rs_df


def _map_examples(fn, x, y, seed, method: str) -> Perturbation:
    """Run a single-example constructor over a batch with derived seeds."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        pert = fn(x, int(np.asarray(y).reshape(())), seed)
        return Perturbation(pert.delta, method, seed=seed, iterations_used=pert.iterations_used)
    y = np.asarray(y, dtype=np.int64)
    rows = [fn(x[i], int(y[i]), derive_seed(seed, i)) for i in range(x.shape[0])]
    delta = np.stack([p.delta for p in rows])
    iters = max((p.iterations_used for p in rows), default=0)
    return Perturbation(delta, method, seed=seed, iterations_used=iters)
