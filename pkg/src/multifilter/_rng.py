"""Seeded sub-streams built on the Philox counter-based generator."""

import numpy as np

# stream tags keep unrelated consumers of one user seed apart
BROWNIAN = 1
SEGMENT = 2
DESIGN = 3
SIMULATION = 4


def substream(seed, *keys):
    """Return a Generator for the sub-stream ``(seed, *keys)``.

    The stream depends only on the key tuple, never on call order, so
    work can be split across processes without changing results.
    """
    words = [int(seed)] + [int(k) for k in keys]
    if any(w < 0 for w in words):
        raise ValueError("seed and stream keys must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))
