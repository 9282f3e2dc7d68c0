"""Reproducible random streams.

Each (master seed, purpose, path index) triple owns an independent Philox
counter-based stream, so ensemble results do not depend on the order in which
paths are processed or on how the time axis is chunked.
"""

from __future__ import annotations

import numpy as np

__all__ = ["PURPOSES", "stream", "path_streams", "draw_normals"]

PURPOSES = {
    "noise": 0,
    "initial": 1,
    "pairs": 2,
    "fields": 3,
    "test": 4,
}


def stream(master_seed, purpose="noise", index=0):
    """A ``numpy.random.Generator`` backed by Philox for one (purpose, index)."""
    try:
        code = PURPOSES[purpose]
    except KeyError:
        raise ValueError(f"unknown stream purpose {purpose!r}; known: {sorted(PURPOSES)}") from None
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(code, int(index)))
    return np.random.Generator(np.random.Philox(seq))


def path_streams(master_seed, n_paths, purpose="noise", start=0):
    """One stream per path, indexed ``start .. start + n_paths - 1``."""
    return [stream(master_seed, purpose, start + i) for i in range(n_paths)]


def draw_normals(streams, shape):
    """Stack ``standard_normal(shape)`` drawn from each stream -> ``(len(streams), *shape)``."""
    out = np.empty((len(streams),) + tuple(shape))
    for i, g in enumerate(streams):
        out[i] = g.standard_normal(shape)
    return out
