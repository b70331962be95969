"""Deterministic, splittable random streams.

Every stochastic task (a tomography point, a repetition, a Monte Carlo sample)
derives its own counter-based Philox stream from a root seed and an integer
path, e.g. stream(seed, point_index, repetition). Streams are independent of
evaluation order and worker count, so parallel runs are bit-identical to
serial ones.
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, *path: int) -> np.random.Generator:
    """Independent generator for the task addressed by `path` under `seed`."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
