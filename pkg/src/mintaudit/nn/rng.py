"""Deterministic random streams derived from one master seed.

Every consumer addresses its stream by a fixed integer path (domain tag plus
indices), so adding a layer, an epoch or a dataset never shifts the draws of
an unrelated consumer.
"""

from __future__ import annotations

import numpy as np

# Domain tags. Keep values stable: they are part of the reproducibility
# contract (checkpoints and cached features depend on them).
PARAM_INIT = 0
DROPOUT = 1
SHUFFLE = 2
DATA = 3
SPLIT = 4
CELL = 5
CONTROL = 6


def stream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the stream addressed by ``(seed, *path)``.

    The same address always yields the same stream; distinct addresses are
    independent for all practical purposes.
    """
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    key = tuple(int(p) & 0xFFFFFFFF for p in path)
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(seq))


def derive_seed(seed: int, *path: int) -> int:
    """A child master seed for a sub-component (e.g. one grid cell)."""
    return int(stream(seed, *path).integers(0, 2**63))
