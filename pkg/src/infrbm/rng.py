"""Counter-based random streams keyed by (seed, stream ids, step).

Every draw comes from a Philox bit generator whose 128-bit key is derived
from the seed and a tuple of stream identifiers (e.g. chain id, purpose),
and whose counter is positioned at the step number.  Any step of any stream
can therefore be regenerated independently of all others.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=4096)
def _key(seed, ids):
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *ids])
    return ss.generate_state(2, dtype=np.uint64)


@dataclass(frozen=True)
class Stream:
    seed: int
    ids: tuple = ()

    def split(self, *ids):
        """Child stream; distinct ids give statistically independent streams."""
        return Stream(self.seed, self.ids + tuple(int(i) for i in ids))

    def generator(self, step=0):
        # step occupies the high 64-bit counter word: 2**128 draws per step
        counter = np.array([0, 0, int(step), 0], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=_key(self.seed, self.ids), counter=counter))


def as_stream(seed):
    if isinstance(seed, Stream):
        return seed
    return Stream(0 if seed is None else int(seed))
