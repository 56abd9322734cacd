"""Counter-based RNG substreams keyed by (master seed, trial, purpose).

Each consumer draws from its own Philox stream so that, e.g., k-means
restarts never shift the shadowing draws, and a trial's numbers do not
depend on which worker ran it.
"""

import numpy as np

GEOMETRY = 0
SHADOWING = 1
CLUSTERING = 2


def substream(seed: int, trial: int = 0, purpose: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(int(trial), int(purpose)))
    return np.random.Generator(np.random.Philox(ss))
