"""Counter-based random streams keyed by ``(seed, stream)``.

Replicate ``r`` of a run seeded with ``s`` always draws from the Philox
stream derived from ``SeedSequence(s, spawn_key=(r,))``, so results do not
depend on the order in which replicates are executed.
"""

import numpy as np

# Stream offsets keep independent roles of one replicate apart.
ORBIT = 0
BACKWARD = 1
STABLE = 2


def stream(seed, replicate=0, role=ORBIT):
    """Return a ``numpy.random.Generator`` for replicate ``replicate`` of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(role), int(replicate)))
    return np.random.Generator(np.random.Philox(ss))


def open_uniform(rng):
    """A single draw from the open interval (0, 1)."""
    u = rng.random()
    while u == 0.0:
        u = rng.random()
    return u
