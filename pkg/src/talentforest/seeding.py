"""Deterministic random streams keyed by (master seed, sub-keys).

Every consumer of randomness gets its own ``numpy`` Generator built from a
``SeedSequence`` whose entropy is the master seed reduced to 64 bits and
whose spawn key is the tuple of integer sub-keys (tree index, fold index,
feature index, ...). Streams with different keys are statistically
independent and do not depend on the order in which they are created.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(seed, *keys):
    """Return a Generator for ``seed`` and the integer path ``keys``."""
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64,
                                spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def child_seed(seed, *keys):
    """Derive a fresh 64-bit integer seed, e.g. for a per-fold forest."""
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64,
                                spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
