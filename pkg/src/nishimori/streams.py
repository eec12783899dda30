"""Counter-based random streams keyed by (master seed, purpose, index)."""

import numpy as np

DISORDER = 0
PHASES = 1
DYNAMICS = 2
PATHS = 3
PLANTED = 4


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
