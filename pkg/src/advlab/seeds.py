"""Deterministic derivation of child RNG seeds from structured keys."""

from __future__ import annotations

import numpy as np


def derive_seed(*parts: int) -> int:
    """Collapse a tuple of non-negative integers into one 32-bit seed.

    The mapping is stable across runs and platforms, so any consumer keyed
    by e.g. (global seed, epoch, batch) gets its own disjoint RNG stream.
    """
    for p in parts:
        if int(p) != p or p < 0:
            raise ValueError(f"seed parts must be non-negative integers, got {parts!r}")
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])
