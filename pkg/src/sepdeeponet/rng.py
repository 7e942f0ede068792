"""Named random streams.

Every consumer draws from its own Philox (counter-based) generator keyed by
``(seed, name)``, so e.g. adding a draw to the data sampler never shifts the
weights produced by parameter initialisation.
"""

from __future__ import annotations

import zlib

import numpy as np


def rng_stream(seed: int, name: str) -> np.random.Generator:
    key = zlib.crc32(name.encode("utf-8"))
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(key,))
    return np.random.Generator(np.random.Philox(ss))
