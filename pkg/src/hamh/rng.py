"""Named random substreams derived from one root seed.

``substream(7, "arrivals", 3)`` always yields the same generator, independent
of how many other streams were drawn before it.
"""

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def substream(root_seed: int, *names) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(root_seed), spawn_key=tuple(_key(n) for n in names))
    return np.random.default_rng(ss)
