"""Named, reproducible random streams.

Every consumer of randomness asks for a stream by ``(seed, *names)``.  The
names are hashed into the spawn key of a :class:`numpy.random.SeedSequence`,
so streams with different names are statistically independent and adding a
new stream never perturbs an existing one.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _name_key(name) -> int:
    digest = hashlib.blake2b(str(name).encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "little")


def derive_seed(seed: int, *names) -> int:
    """Stable 63-bit integer seed derived from a base seed and a name path."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_name_key(n) for n in names))
    return int(ss.generate_state(2, dtype=np.uint32).view(np.uint64)[0] >> np.uint64(1))


def stream(seed: int, *names) -> np.random.Generator:
    """Return an independent generator for ``(seed, *names)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_name_key(n) for n in names))
    return np.random.Generator(np.random.PCG64(ss))
