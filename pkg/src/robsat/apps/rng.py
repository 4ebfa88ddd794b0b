"""Seeded random streams.

Every purpose draws from its own Philox (counter-based, 64-bit) stream keyed
by ``(seed, stream id)``, so adding draws to one purpose never shifts another.
"""

import numpy as np

STREAMS = {"samples": 1, "instances": 2, "mc": 3, "models": 4}


def stream(seed: int, purpose: str) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(STREAMS[purpose],))
    return np.random.Generator(np.random.Philox(ss))
