"""Deterministic seed derivation shared by every randomized component.

All randomness in the package flows from user-supplied master seeds through
``derive_seed``, which maps ``(master, *key)`` to a fresh 64-bit seed via
``numpy.random.SeedSequence(master, spawn_key=key)``. The scheme is pure,
collision-resistant, and independent of call order or thread scheduling, so
any computation can be parallelized without changing its output.
"""

from __future__ import annotations

import numpy as np

__all__ = ["derive_seed", "generator"]


def derive_seed(master: int, *key: int) -> int:
    """Derive a child seed from ``master`` and an integer key path.

    Args:
        master: Non-negative master seed.
        key: Integer path identifying the consumer (role constants,
            replicate indices, fold indices, ...).

    Returns:
        A seed in [0, 2**64), identical for identical arguments.
    """
    if master < 0:
        raise ValueError(f"seed must be non-negative, got {master}")
    ss = np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def generator(seed: int) -> np.random.Generator:
    """PCG64 generator for ``seed``; the package-wide bit generator choice."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
