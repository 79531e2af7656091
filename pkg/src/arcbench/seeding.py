"""Counter-based RNG substreams keyed by integer tuples.

Every random draw in the package comes from a Philox generator seeded with a
documented key, so results are reproducible independent of draw order:

    substream(seed)                      -> one-off generator
    substream(seed, task, cls, split)    -> per-class data substream
    substream(seed, stage, tag)          -> harness substream (see harness tags)
"""

import numpy as np


def substream(*key: int) -> np.random.Generator:
    """Generator for the substream identified by a tuple of nonnegative ints."""
    for part in key:
        if part < 0:
            raise ValueError(f"substream key parts must be nonnegative, got {key}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))
